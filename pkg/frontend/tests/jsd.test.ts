import { beforeEach, describe, expect, it } from "vitest";

import { createApp } from "../src/main.js";
import { CLUSTERS_FIXTURE, defaultRoutes, mockServer } from "./fixtures.js";

function mount() {
  const el = document.createElement("div");
  document.body.append(el);
  return el;
}

function cell(row: number, col: number): HTMLTableCellElement {
  const el = document.querySelector<HTMLTableCellElement>(
    `.jsd-matrix td[data-row="${row}"][data-col="${col}"]`,
  );
  if (!el) throw new Error(`no cell (${row}, ${col})`);
  return el;
}

describe("jsd panel", () => {
  beforeEach(() => {
    document.body.replaceChildren();
  });

  it("renders a k x k matrix with labels", async () => {
    mockServer(defaultRoutes());
    const app = createApp(mount(), "");
    await app.ready;
    const k = CLUSTERS_FIXTURE.jsd.length;
    expect(document.querySelectorAll(".jsd-matrix td").length).toBe(k * k);
    const headers = [...document.querySelectorAll(".jsd-matrix tr:first-child th")]
      .slice(1)
      .map((th) => th.textContent);
    expect(headers).toEqual(CLUSTERS_FIXTURE.clusters.map((c) => c.label));
  });

  it("tooltip values are symmetric and verbatim from the payload", async () => {
    mockServer(defaultRoutes());
    const app = createApp(mount(), "");
    await app.ready;
    const k = CLUSTERS_FIXTURE.jsd.length;
    for (let i = 0; i < k; i++) {
      for (let j = 0; j < k; j++) {
        expect(cell(i, j).title).toBe(String(CLUSTERS_FIXTURE.jsd[i]![j]!));
        expect(cell(i, j).title).toBe(cell(j, i).title);
      }
    }
  });

  it("marks the diagonal distinctly", async () => {
    mockServer(defaultRoutes());
    const app = createApp(mount(), "");
    await app.ready;
    expect(cell(0, 0).classList.contains("diagonal")).toBe(true);
    expect(cell(0, 1).classList.contains("diagonal")).toBe(false);
  });
});
