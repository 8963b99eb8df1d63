import { beforeEach, describe, expect, it } from "vitest";

import { similarityColor } from "../src/color.js";
import { createApp } from "../src/main.js";
import {
  defaultRoutes,
  HEATMAP_FIXTURE,
  HEATMAP_FIXTURE_ALT,
  MAP_FIXTURE,
  mockServer,
} from "./fixtures.js";

function mount() {
  const el = document.createElement("div");
  document.body.append(el);
  return el;
}

describe("atlas view", () => {
  beforeEach(() => {
    document.body.replaceChildren();
  });

  it("loads the map points on startup", async () => {
    mockServer(defaultRoutes());
    const app = createApp(mount(), "");
    await app.ready;
    expect(app.store.get().points.length).toBe(MAP_FIXTURE.points.length);
    expect(app.atlas.placeholder.hidden).toBe(true);
  });

  it("recolors the heatmap when a new query lands", async () => {
    const routes = defaultRoutes();
    mockServer(routes);
    const app = createApp(mount(), "");
    await app.ready;

    await app.search.submit("superconductor");
    const first = app.store.get().overlay;
    expect(first).toEqual(HEATMAP_FIXTURE.values);
    const colorsBefore = MAP_FIXTURE.points.map((_, i) => app.atlas.pointColor(i));
    expect(colorsBefore[0]).toBe(similarityColor(HEATMAP_FIXTURE.values[0]!));

    // new query, new overlay: colors must follow without a reload
    const heatmapRoute = routes.find((r) => r.match === "POST /heatmap")!;
    heatmapRoute.body = HEATMAP_FIXTURE_ALT;
    await app.search.submit("porous framework");
    const second = app.store.get().overlay;
    expect(second).toEqual(HEATMAP_FIXTURE_ALT.values);
    const colorsAfter = MAP_FIXTURE.points.map((_, i) => app.atlas.pointColor(i));
    expect(colorsAfter[0]).toBe(similarityColor(HEATMAP_FIXTURE_ALT.values[0]!));
    expect(colorsAfter).not.toEqual(colorsBefore);
  });

  it("keeps overlay and results in one atomic update", async () => {
    mockServer(defaultRoutes());
    const app = createApp(mount(), "");
    await app.ready;
    const snapshots: Array<{ results: number; overlay: number[] | null }> = [];
    app.store.subscribe((s) => snapshots.push({ results: s.results.length, overlay: s.overlay }));
    await app.search.submit("superconductor");
    const withResults = snapshots.filter((s) => s.results > 0);
    expect(withResults.length).toBeGreaterThan(0);
    // the very first snapshot that has results already has the overlay
    expect(withResults[0]!.overlay).toEqual(HEATMAP_FIXTURE.values);
  });

  it("shows the placeholder when the atlas is not built (409)", async () => {
    const routes = defaultRoutes().filter(
      (r) => !["GET /map", "GET /clusters", "POST /heatmap"].includes(r.match),
    );
    routes.push(
      { match: "GET /map", status: 409, body: { detail: "atlas not built" } },
      { match: "GET /clusters", status: 409, body: { detail: "atlas not built" } },
      { match: "POST /heatmap", status: 409, body: { detail: "atlas not built" } },
    );
    mockServer(routes);
    const app = createApp(mount(), "");
    await app.ready;
    expect(app.atlas.placeholder.hidden).toBe(false);
    expect(app.atlas.placeholder.textContent).toBe("atlas not built");
    expect(app.jsd.root.textContent).toContain("atlas not built");
    // a search still works; overlay quietly stays empty
    await app.search.submit("superconductor");
    expect(app.store.get().results.length).toBeGreaterThan(0);
    expect(app.store.get().overlay).toBeNull();
  });

  it("hit-testing and label anchors use the projected geometry", async () => {
    mockServer(defaultRoutes());
    const app = createApp(mount(), "");
    await app.ready;
    const first = app.store.get().points[0]!;
    const screen = app.atlas.project(first);
    expect(app.atlas.hitTest(screen.x, screen.y)).toBe(0);
    expect(app.atlas.hitTest(screen.x + 50, screen.y + 50)).toBeNull();
    const anchors = app.atlas.labelAnchors();
    expect(anchors.size).toBe(2);
    expect(anchors.get(0)!.cluster).toBe(0);
    expect(anchors.get(1)!.cluster).toBe(1);
  });

  it("hover tooltip shows the id, then the lazily fetched title", async () => {
    mockServer(defaultRoutes());
    const app = createApp(mount(), "");
    await app.ready;
    const first = app.store.get().points[0]!;
    const screen = app.atlas.project(first);
    (app.atlas as unknown as { hover(x: number, y: number): void }).hover(screen.x, screen.y);
    expect(app.atlas.tooltip.hidden).toBe(false);
    expect(app.atlas.tooltip.textContent).toBe("A1");
    await new Promise((resolve) => setTimeout(resolve));
    expect(app.atlas.tooltip.textContent).toContain(
      "Pressure induced superconductivity in NbX",
    );
  });

  it("cluster label toggle writes through to the store", async () => {
    mockServer(defaultRoutes());
    const app = createApp(mount(), "");
    await app.ready;
    expect(app.store.get().showClusterLabels).toBe(true);
    app.atlas.toggle.checked = false;
    app.atlas.toggle.dispatchEvent(new Event("change"));
    expect(app.store.get().showClusterLabels).toBe(false);
  });

  it("rejects an overlay that does not match the point count", async () => {
    mockServer(defaultRoutes());
    const app = createApp(mount(), "");
    await app.ready;
    expect(() => app.store.update({ overlay: [1, 2] })).toThrow(/overlay length/);
  });
});
