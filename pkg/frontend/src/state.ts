/** Single observable view state shared by all panels.
 *
 * The result list and the similarity overlay always change together in one
 * update(), so a new query can never leave the scatter colored by the old
 * one while the list already shows the new hits.
 */

import type { MapPoint, SearchHit } from "./types.js";

export interface ViewState {
  query: string;
  results: SearchHit[];
  selectedId: string | null;
  points: MapPoint[];
  overlay: number[] | null; // aligned with points; null = no active query
  showClusterLabels: boolean;
  error: string | null;
}

export function initialState(): ViewState {
  return {
    query: "",
    results: [],
    selectedId: null,
    points: [],
    overlay: null,
    showClusterLabels: true,
    error: null,
  };
}

export type Listener = (state: ViewState) => void;

export class Store {
  private state: ViewState = initialState();
  private listeners: Listener[] = [];

  get(): ViewState {
    return this.state;
  }

  update(patch: Partial<ViewState>): void {
    const next = { ...this.state, ...patch };
    if (next.overlay !== null && next.overlay.length !== next.points.length) {
      throw new Error(
        `overlay length ${next.overlay.length} != point count ${next.points.length}`,
      );
    }
    if (
      next.selectedId !== null &&
      !next.results.some((r) => r.id === next.selectedId) &&
      !next.points.some((p) => p.id === next.selectedId)
    ) {
      throw new Error(`selected id ${next.selectedId} is not in results or atlas`);
    }
    this.state = next;
    for (const listener of this.listeners) listener(this.state);
  }

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }
}
