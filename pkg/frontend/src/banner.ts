/** Inline error banner bound to the store's error field. */

import type { Store } from "./state.js";

export class ErrorBanner {
  readonly root: HTMLElement;

  constructor(store: Store) {
    this.root = document.createElement("div");
    this.root.className = "error-banner";
    this.root.setAttribute("role", "alert");
    this.root.hidden = true;
    store.subscribe((state) => {
      if (state.error) {
        this.root.textContent = state.error;
        this.root.hidden = false;
      } else {
        this.root.hidden = true;
      }
    });
  }
}
