/** Payload shapes of the retrieval service JSON API. */

export interface SearchHit {
  id: string;
  title: string;
  score: number;
}

export interface MapPoint {
  id: string;
  x: number;
  y: number;
  cluster: number;
}

export interface ClusterInfo {
  id: number;
  label: string;
  size: number;
}

export interface MapPayload {
  points: MapPoint[];
  clusters: ClusterInfo[];
  jsd: number[][];
}

export interface HeatmapPayload {
  values: number[];
}

export interface StructurePayload {
  id: string;
  title: string;
  lattice: { a: number; b: number; c: number; alpha: number; beta: number; gamma: number };
  sites: { element: string; frac: number[] }[];
}

export interface ClustersPayload {
  clusters: ClusterInfo[];
  jsd: number[][];
}

export interface HealthPayload {
  status: string;
  model_checksum: string;
  n_structures: number;
}
