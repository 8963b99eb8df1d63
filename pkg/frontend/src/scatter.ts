/** Canvas atlas view: pan/zoom scatter of the map points, colored by
 * cluster or by the active query-similarity overlay, with hover lookups
 * and cluster labels drawn at the point nearest each cluster's centroid.
 *
 * Rendering goes through a plain 2-D canvas so tens of thousands of points
 * stay cheap; all hit-testing works in screen space.
 */

import { clusterColor, similarityColor, LEGEND_TICKS } from "./color.js";
import type { Store } from "./state.js";
import type { ClusterInfo, MapPoint } from "./types.js";

interface Viewport {
  scale: number;
  offsetX: number;
  offsetY: number;
}

export class AtlasView {
  readonly root: HTMLElement;
  readonly canvas: HTMLCanvasElement;
  readonly tooltip: HTMLElement;
  readonly legend: HTMLElement;
  readonly toggle: HTMLInputElement;
  readonly placeholder: HTMLElement;
  clusters: ClusterInfo[] = [];
  private viewport: Viewport = { scale: 1, offsetX: 0, offsetY: 0 };
  private dragging: { x: number; y: number } | null = null;
  private bounds = { minX: -1, maxX: 1, minY: -1, maxY: 1 };
  private titleCache = new Map<string, string>();

  constructor(
    private store: Store,
    width = 640,
    height = 480,
    private fetchTitle?: (id: string) => Promise<string>,
  ) {
    this.root = document.createElement("section");
    this.root.className = "atlas-view";

    this.canvas = document.createElement("canvas");
    this.canvas.width = width;
    this.canvas.height = height;

    this.placeholder = document.createElement("p");
    this.placeholder.className = "placeholder";
    this.placeholder.textContent = "atlas not built";
    this.placeholder.hidden = true;

    this.tooltip = document.createElement("div");
    this.tooltip.className = "tooltip";
    this.tooltip.hidden = true;

    const controls = document.createElement("label");
    this.toggle = document.createElement("input");
    this.toggle.type = "checkbox";
    this.toggle.checked = true;
    controls.append(this.toggle, document.createTextNode(" cluster labels"));

    this.legend = document.createElement("div");
    this.legend.className = "legend";
    for (const tick of LEGEND_TICKS) {
      const swatch = document.createElement("span");
      swatch.style.background = similarityColor(tick);
      swatch.textContent = String(tick);
      this.legend.append(swatch);
    }

    this.root.append(controls, this.canvas, this.legend, this.placeholder, this.tooltip);

    this.toggle.addEventListener("change", () => {
      this.store.update({ showClusterLabels: this.toggle.checked });
    });
    this.canvas.addEventListener("wheel", (event) => {
      event.preventDefault();
      const factor = event.deltaY < 0 ? 1.15 : 1 / 1.15;
      this.viewport.scale *= factor;
      this.draw();
    });
    this.canvas.addEventListener("mousedown", (event) => {
      this.dragging = { x: event.offsetX, y: event.offsetY };
    });
    this.canvas.addEventListener("mouseup", () => (this.dragging = null));
    this.canvas.addEventListener("mouseleave", () => {
      this.dragging = null;
      this.tooltip.hidden = true;
    });
    this.canvas.addEventListener("mousemove", (event) => {
      if (this.dragging) {
        this.viewport.offsetX += event.offsetX - this.dragging.x;
        this.viewport.offsetY += event.offsetY - this.dragging.y;
        this.dragging = { x: event.offsetX, y: event.offsetY };
        this.draw();
        return;
      }
      this.hover(event.offsetX, event.offsetY);
    });

    store.subscribe(() => this.draw());
  }

  setAtlasMissing(missing: boolean): void {
    this.placeholder.hidden = !missing;
    this.canvas.hidden = missing;
  }

  setPoints(points: MapPoint[], clusters: ClusterInfo[]): void {
    this.clusters = clusters;
    if (points.length) {
      const xs = points.map((p) => p.x);
      const ys = points.map((p) => p.y);
      this.bounds = {
        minX: Math.min(...xs),
        maxX: Math.max(...xs),
        minY: Math.min(...ys),
        maxY: Math.max(...ys),
      };
    }
    this.store.update({ points, overlay: null });
  }

  /** Data coordinates -> screen pixels under the current viewport. */
  project(p: { x: number; y: number }): { x: number; y: number } {
    const { minX, maxX, minY, maxY } = this.bounds;
    const pad = 20;
    const spanX = maxX - minX || 1;
    const spanY = maxY - minY || 1;
    const baseX = pad + ((p.x - minX) / spanX) * (this.canvas.width - 2 * pad);
    const baseY = pad + ((p.y - minY) / spanY) * (this.canvas.height - 2 * pad);
    const cx = this.canvas.width / 2;
    const cy = this.canvas.height / 2;
    return {
      x: (baseX - cx) * this.viewport.scale + cx + this.viewport.offsetX,
      y: (baseY - cy) * this.viewport.scale + cy + this.viewport.offsetY,
    };
  }

  /** The color of point i under the current overlay (or its cluster color). */
  pointColor(index: number): string {
    const state = this.store.get();
    const overlay = state.overlay;
    if (overlay !== null) {
      const value = overlay[index];
      if (value !== undefined) return similarityColor(value);
    }
    const point = state.points[index];
    return clusterColor(point ? point.cluster : 0);
  }

  /** Index of the closest point within `radius` px of a screen position. */
  hitTest(x: number, y: number, radius = 6): number | null {
    const points = this.store.get().points;
    let best: number | null = null;
    let bestDist = radius * radius;
    for (let i = 0; i < points.length; i++) {
      const p = points[i];
      if (!p) continue;
      const s = this.project(p);
      const dx = s.x - x;
      const dy = s.y - y;
      const d = dx * dx + dy * dy;
      if (d <= bestDist) {
        bestDist = d;
        best = i;
      }
    }
    return best;
  }

  /** Per-cluster label anchor: the member point nearest the cluster centroid. */
  labelAnchors(): Map<number, MapPoint> {
    const points = this.store.get().points;
    const sums = new Map<number, { x: number; y: number; n: number }>();
    for (const p of points) {
      const s = sums.get(p.cluster) ?? { x: 0, y: 0, n: 0 };
      s.x += p.x;
      s.y += p.y;
      s.n += 1;
      sums.set(p.cluster, s);
    }
    const anchors = new Map<number, MapPoint>();
    for (const [cluster, s] of sums) {
      const cx = s.x / s.n;
      const cy = s.y / s.n;
      let best: MapPoint | null = null;
      let bestDist = Infinity;
      for (const p of points) {
        if (p.cluster !== cluster) continue;
        const d = (p.x - cx) ** 2 + (p.y - cy) ** 2;
        if (d < bestDist) {
          bestDist = d;
          best = p;
        }
      }
      if (best) anchors.set(cluster, best);
    }
    return anchors;
  }

  private hover(x: number, y: number): void {
    const index = this.hitTest(x, y);
    if (index === null) {
      this.tooltip.hidden = true;
      return;
    }
    const point = this.store.get().points[index];
    if (!point) return;
    const title = this.titleOf(point.id);
    this.tooltip.textContent = title ? `${point.id}: ${title}` : point.id;
    this.tooltip.style.left = `${x + 12}px`;
    this.tooltip.style.top = `${y + 12}px`;
    this.tooltip.hidden = false;
    if (!title && this.fetchTitle) {
      void this.resolveTitle(point.id);
    }
  }

  /** Titles come from search hits or the lazy per-structure lookup. */
  private titleOf(id: string): string | null {
    const cached = this.titleCache.get(id);
    if (cached) return cached;
    const hit = this.store.get().results.find((r) => r.id === id);
    return hit ? hit.title : null;
  }

  private async resolveTitle(id: string): Promise<void> {
    if (this.titleCache.has(id) || !this.fetchTitle) return;
    this.titleCache.set(id, ""); // claim before awaiting: one fetch per id
    try {
      const title = await this.fetchTitle(id);
      this.titleCache.set(id, title);
      // refresh the tooltip if the pointer is still on this point
      if (!this.tooltip.hidden && this.tooltip.textContent === id && title) {
        this.tooltip.textContent = `${id}: ${title}`;
      }
    } catch {
      this.titleCache.delete(id); // transient failure: retry on next hover
    }
  }

  draw(): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return; // headless test environment
    const state = this.store.get();
    ctx.clearRect(0, 0, this.canvas.width, this.canvas.height);
    state.points.forEach((point, i) => {
      const s = this.project(point);
      ctx.fillStyle = this.pointColor(i);
      ctx.beginPath();
      ctx.arc(s.x, s.y, 2.5, 0, Math.PI * 2);
      ctx.fill();
    });
    if (state.showClusterLabels && this.clusters.length) {
      ctx.fillStyle = "#111";
      ctx.font = "12px sans-serif";
      const anchors = this.labelAnchors();
      for (const info of this.clusters) {
        const anchor = anchors.get(info.id);
        if (!anchor) continue;
        const s = this.project(anchor);
        ctx.fillText(info.label, s.x + 4, s.y - 4);
      }
    }
  }
}
