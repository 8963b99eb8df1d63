import { beforeEach, describe, expect, it } from "vitest";

import { createApp } from "../src/main.js";
import {
  defaultRoutes,
  mockServer,
  SEARCH_FIXTURE,
  STRUCTURE_FIXTURE,
} from "./fixtures.js";

function mount() {
  const el = document.createElement("div");
  document.body.append(el);
  return el;
}

describe("search panel", () => {
  beforeEach(() => {
    document.body.replaceChildren();
  });

  it("renders the ranked list from a query", async () => {
    mockServer(defaultRoutes());
    const app = createApp(mount(), "");
    await app.ready;
    await app.search.submit("superconductor");
    const rows = [...document.querySelectorAll(".results li")];
    expect(rows.length).toBe(SEARCH_FIXTURE.length);
    const titles = rows.map((r) => r.querySelector("a")?.textContent);
    expect(titles).toEqual(SEARCH_FIXTURE.map((h) => h.title));
    // scores render the payload values verbatim, no client-side math
    const scores = rows.map((r) => r.querySelector(".score")?.textContent);
    expect(scores).toEqual(SEARCH_FIXTURE.map((h) => String(h.score)));
  });

  it("keeps the button disabled for empty queries", async () => {
    mockServer(defaultRoutes());
    const app = createApp(mount(), "");
    await app.ready;
    expect(app.search.button.disabled).toBe(true);
    app.search.input.value = "  ";
    app.search.input.dispatchEvent(new Event("input"));
    expect(app.search.button.disabled).toBe(true);
    app.search.input.value = "oxide";
    app.search.input.dispatchEvent(new Event("input"));
    expect(app.search.button.disabled).toBe(false);
  });

  it("opens the detail pane when a row is clicked", async () => {
    mockServer(defaultRoutes());
    const app = createApp(mount(), "");
    await app.ready;
    await app.search.submit("superconductor");
    const first = document.querySelector<HTMLAnchorElement>(".results li a");
    first?.click();
    await new Promise((resolve) => setTimeout(resolve));
    expect(app.detail.root.hidden).toBe(false);
    expect(app.detail.root.textContent).toContain(STRUCTURE_FIXTURE.title);
    expect(app.detail.root.textContent).toContain("a=2");
    expect(app.store.get().selectedId).toBe("A1");
  });

  it("aborts a superseded in-flight query", async () => {
    const calls = mockServer(defaultRoutes());
    const app = createApp(mount(), "");
    await app.ready;
    const slow = app.search.submit("first query");
    const fast = app.search.submit("second query");
    await Promise.all([slow, fast]);
    expect(app.store.get().query).toBe("second query");
    expect(calls.filter((c) => c === "POST /search").length).toBe(2);
  });
});
