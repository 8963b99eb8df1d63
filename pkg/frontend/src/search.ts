/** Search panel: query box, ranked result list, structure detail trigger.
 *
 * A new submission aborts any in-flight one; results and the heatmap
 * overlay land in the store in a single atomic update.
 */

import { ApiClient, ApiError } from "./api.js";
import type { Store } from "./state.js";
import type { SearchHit } from "./types.js";

export class SearchPanel {
  readonly root: HTMLElement;
  readonly input: HTMLInputElement;
  readonly button: HTMLButtonElement;
  readonly list: HTMLOListElement;
  private inflight: AbortController | null = null;

  constructor(
    private api: ApiClient,
    private store: Store,
    private onSelect: (id: string) => void,
    private k: number = 20,
  ) {
    this.root = document.createElement("section");
    this.root.className = "search-panel";

    const form = document.createElement("form");
    this.input = document.createElement("input");
    this.input.type = "search";
    this.input.placeholder = "e.g. narrow-bandgap material";
    this.button = document.createElement("button");
    this.button.type = "submit";
    this.button.textContent = "Search";
    this.button.disabled = true;
    form.append(this.input, this.button);

    this.list = document.createElement("ol");
    this.list.className = "results";
    this.root.append(form, this.list);

    this.input.addEventListener("input", () => {
      this.button.disabled = this.input.value.trim() === "";
    });
    form.addEventListener("submit", (event) => {
      event.preventDefault();
      void this.submit(this.input.value);
    });

    store.subscribe((state) => this.renderResults(state.results));
  }

  /** Run a query: fetch hits and overlay together, then update the store once. */
  async submit(query: string): Promise<void> {
    const trimmed = query.trim();
    if (!trimmed) return;
    this.inflight?.abort();
    const controller = new AbortController();
    this.inflight = controller;
    try {
      const hits = await this.api.search(trimmed, this.k, controller.signal);
      let overlay: number[] | null = null;
      try {
        const heatmap = await this.api.heatmap(trimmed, controller.signal);
        overlay = heatmap.values;
      } catch (error) {
        if (!(error instanceof ApiError && error.status === 409)) throw error;
        // no atlas: the list still renders, the scatter keeps cluster colors
      }
      if (controller.signal.aborted) return;
      const points = this.store.get().points;
      if (overlay !== null && overlay.length !== points.length) {
        overlay = null; // stale or mismatched overlay: keep cluster colors
      }
      this.store.update({
        query: trimmed,
        results: hits,
        overlay,
        selectedId: null,
        error: null,
      });
    } catch (error) {
      if (controller.signal.aborted) return;
      const message =
        error instanceof ApiError
          ? `search failed (${error.status}): ${error.message}`
          : `search failed: ${String(error)}`;
      this.store.update({ error: message });
    } finally {
      if (this.inflight === controller) this.inflight = null;
    }
  }

  private renderResults(results: SearchHit[]): void {
    this.list.replaceChildren();
    for (const hit of results) {
      const item = document.createElement("li");
      const link = document.createElement("a");
      link.href = "#";
      link.dataset.id = hit.id;
      link.textContent = hit.title;
      const score = document.createElement("span");
      score.className = "score";
      // the payload value verbatim: the UI never recomputes scores
      score.textContent = String(hit.score);
      item.append(link, score);
      link.addEventListener("click", (event) => {
        event.preventDefault();
        this.onSelect(hit.id);
      });
      this.list.append(item);
    }
  }
}
