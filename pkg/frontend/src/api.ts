/** Typed client for the retrieval service. All calls are reads.
 *
 * Errors surface as ApiError with the HTTP status so the UI can
 * distinguish "atlas not built" (409) from real failures.
 */

import type {
  ClustersPayload,
  HealthPayload,
  HeatmapPayload,
  MapPayload,
  SearchHit,
  StructurePayload,
} from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  const response = await fetch(url, init);
  if (!response.ok) {
    let detail = response.statusText;
    try {
      const body = await response.json();
      if (body && typeof body.detail === "string") detail = body.detail;
    } catch {
      // non-JSON error body: keep the status text
    }
    throw new ApiError(response.status, detail);
  }
  return (await response.json()) as T;
}

export class ApiClient {
  constructor(public baseUrl: string = "") {}

  health(): Promise<HealthPayload> {
    return request(`${this.baseUrl}/health`);
  }

  search(query: string, k: number, signal?: AbortSignal): Promise<SearchHit[]> {
    return request(`${this.baseUrl}/search`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ query, k }),
      signal,
    });
  }

  map(): Promise<MapPayload> {
    return request(`${this.baseUrl}/map`);
  }

  heatmap(query: string, signal?: AbortSignal): Promise<HeatmapPayload> {
    return request(`${this.baseUrl}/heatmap`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ query }),
      signal,
    });
  }

  structure(id: string): Promise<StructurePayload> {
    return request(`${this.baseUrl}/structure/${encodeURIComponent(id)}`);
  }

  clusters(): Promise<ClustersPayload> {
    return request(`${this.baseUrl}/clusters`);
  }
}
