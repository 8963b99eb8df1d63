/** Structure detail pane: lattice, sites, and the source title. */

import { ApiClient, ApiError } from "./api.js";
import type { StructurePayload } from "./types.js";

export class DetailPane {
  readonly root: HTMLElement;

  constructor(private api: ApiClient) {
    this.root = document.createElement("aside");
    this.root.className = "detail-pane";
    this.root.hidden = true;
  }

  async show(id: string, score?: number): Promise<void> {
    let payload: StructurePayload;
    try {
      payload = await this.api.structure(id);
    } catch (error) {
      const status = error instanceof ApiError ? error.status : "?";
      this.root.hidden = false;
      this.root.replaceChildren(
        text("p", `could not load structure ${id} (${status})`),
      );
      return;
    }
    const { lattice } = payload;
    const rows = [
      text("h2", payload.id),
      text("p", payload.title),
      text(
        "p",
        `a=${lattice.a} b=${lattice.b} c=${lattice.c} ` +
          `alpha=${lattice.alpha} beta=${lattice.beta} gamma=${lattice.gamma}`,
      ),
    ];
    if (score !== undefined) rows.push(text("p", `score ${score}`));
    const sites = document.createElement("ul");
    sites.className = "sites";
    for (const site of payload.sites) {
      sites.append(text("li", `${site.element} (${site.frac.join(", ")})`));
    }
    rows.push(text("h3", `${payload.sites.length} sites`), sites);
    this.root.replaceChildren(...rows);
    this.root.hidden = false;
  }
}

function text(tag: string, content: string): HTMLElement {
  const el = document.createElement(tag);
  el.textContent = content;
  return el;
}
