/** Mock-server fixtures: a fetch stub with canned payloads per route. */

import type { ClustersPayload, MapPayload, SearchHit, StructurePayload } from "../src/types.js";

export const MAP_FIXTURE: MapPayload = {
  points: [
    { id: "A1", x: -4.0, y: -3.0, cluster: 0 },
    { id: "A2", x: -3.5, y: -2.5, cluster: 0 },
    { id: "B1", x: 4.0, y: 3.0, cluster: 1 },
    { id: "B2", x: 3.6, y: 2.8, cluster: 1 },
  ],
  clusters: [
    { id: 0, label: "superconductor / metal", size: 2 },
    { id: 1, label: "framework / porous", size: 2 },
  ],
  jsd: [
    [0.21, 0.93],
    [0.93, 0.27],
  ],
};

export const SEARCH_FIXTURE: SearchHit[] = [
  { id: "A1", title: "Pressure induced superconductivity in NbX", score: 0.913411 },
  { id: "A2", title: "Emergent superconducting phase of TaY", score: 0.882734 },
  { id: "B1", title: "Porous framework ZnCO for gas adsorption", score: 0.101212 },
];

export const HEATMAP_FIXTURE = { values: [0.91, 0.88, 0.1, 0.05] };
export const HEATMAP_FIXTURE_ALT = { values: [-0.2, -0.1, 0.95, 0.9] };

export const STRUCTURE_FIXTURE: StructurePayload = {
  id: "A1",
  title: "Pressure induced superconductivity in NbX",
  lattice: { a: 2.0, b: 2.0, c: 2.0, alpha: 90, beta: 90, gamma: 90 },
  sites: [{ element: "Nb", frac: [0, 0, 0] }],
};

export const CLUSTERS_FIXTURE: ClustersPayload = {
  clusters: MAP_FIXTURE.clusters,
  jsd: MAP_FIXTURE.jsd,
};

export interface Route {
  /** e.g. "POST /search"; matched against `${method} ${pathname}` */
  match: string;
  status?: number;
  body: unknown;
}

function respond(status: number, body: unknown) {
  return {
    ok: status >= 200 && status < 300,
    status,
    statusText: String(status),
    json: () => Promise.resolve(body),
  };
}

/** Install a fetch stub; returns the log of `${method} ${path}` calls. */
export function mockServer(routes: Route[]): string[] {
  const calls: string[] = [];
  (globalThis as Record<string, unknown>).fetch = (
    url: string,
    init?: { method?: string; signal?: AbortSignal },
  ) => {
    const method = init?.method ?? "GET";
    const path = url.replace(/^https?:\/\/[^/]+/, "");
    const key = `${method} ${path}`;
    calls.push(key);
    if (init?.signal?.aborted) {
      return Promise.reject(new DOMException("aborted", "AbortError"));
    }
    for (const route of routes) {
      if (route.match === key || key.startsWith(route.match)) {
        return Promise.resolve(respond(route.status ?? 200, route.body));
      }
    }
    return Promise.resolve(respond(404, { detail: `no fixture for ${key}` }));
  };
  return calls;
}

export function defaultRoutes(): Route[] {
  return [
    { match: "GET /map", body: MAP_FIXTURE },
    { match: "GET /clusters", body: CLUSTERS_FIXTURE },
    { match: "POST /search", body: SEARCH_FIXTURE },
    { match: "POST /heatmap", body: HEATMAP_FIXTURE },
    { match: "GET /structure/A1", body: STRUCTURE_FIXTURE },
  ];
}
