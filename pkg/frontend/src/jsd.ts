/** Cluster-coherence panel: the k x k divergence matrix as a colored grid.
 *
 * Cells carry the numeric payload value in their tooltip (title attribute),
 * so symmetry is inspectable cell by cell; the diagonal gets a marker class
 * to keep it visually distinct.
 */

import type { ClustersPayload } from "./types.js";

export class JsdPanel {
  readonly root: HTMLElement;

  constructor() {
    this.root = document.createElement("section");
    this.root.className = "jsd-panel";
    this.renderPlaceholder("no clusters yet");
  }

  renderPlaceholder(message: string): void {
    const p = document.createElement("p");
    p.className = "placeholder";
    p.textContent = message;
    this.root.replaceChildren(p);
  }

  render(payload: ClustersPayload): void {
    const k = payload.jsd.length;
    const table = document.createElement("table");
    table.className = "jsd-matrix";

    const header = document.createElement("tr");
    header.append(document.createElement("th"));
    for (const info of payload.clusters) {
      const th = document.createElement("th");
      th.textContent = info.label;
      header.append(th);
    }
    table.append(header);

    for (let i = 0; i < k; i++) {
      const row = document.createElement("tr");
      const th = document.createElement("th");
      th.textContent = payload.clusters[i]?.label ?? String(i);
      row.append(th);
      const jsdRow = payload.jsd[i];
      for (let j = 0; j < k; j++) {
        const cell = document.createElement("td");
        const value = jsdRow?.[j];
        if (value !== undefined) {
          cell.title = String(value); // tooltip: the payload value verbatim
          const shade = Math.round(255 * (1 - value));
          cell.style.background = `rgb(${shade}, ${shade}, 255)`;
        }
        if (i === j) cell.classList.add("diagonal");
        cell.dataset.row = String(i);
        cell.dataset.col = String(j);
        row.append(cell);
      }
      table.append(row);
    }
    this.root.replaceChildren(table);
  }
}
