"""Periodic neighbor graphs with Gaussian-expanded distance features.

A structure becomes a directed graph: one node per site (one-hot element
features) and, for every site, edges to its nearest periodic neighbors
within a cutoff. Edge features are Gaussian expansions of the distance.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .cifio import CrystalStructure, atomic_number, lattice_matrix
from .errors import IsolatedAtom

N_ELEMENT_FEATURES = 118

_CACHE_MAGIC = b"XTALGRPH"
_CACHE_VERSION = 1


@dataclass(frozen=True)
class GraphConfig:
    cutoff: float = 8.0
    max_neighbors: int = 12
    gauss_min: float = 0.0
    gauss_max: float = 8.0
    gauss_step: float = 0.2
    gauss_sigma: float = 0.2

    def __post_init__(self):
        if not self.cutoff > 0:
            raise ValueError("cutoff must be positive")
        if self.max_neighbors < 1:
            raise ValueError("max_neighbors must be >= 1")
        if not self.gauss_min < self.gauss_max:
            raise ValueError("gauss_min must be < gauss_max")
        if not self.gauss_step > 0 or not self.gauss_sigma > 0:
            raise ValueError("gauss_step and gauss_sigma must be positive")

    @property
    def n_edge_features(self) -> int:
        return int(math.floor((self.gauss_max - self.gauss_min) / self.gauss_step)) + 1


class Edge(NamedTuple):
    src: int
    dst: int
    offset: tuple[int, int, int]
    distance: float


@dataclass
class CrystalGraph:
    node_features: np.ndarray   # n x 118 float32 one-hot
    edge_src: np.ndarray        # E int32
    edge_dst: np.ndarray        # E int32
    edge_offsets: np.ndarray    # E x 3 int32
    edge_distances: np.ndarray  # E float64
    edge_features: np.ndarray   # E x F float32

    @property
    def n_nodes(self) -> int:
        return self.node_features.shape[0]

    @property
    def n_edges(self) -> int:
        return self.edge_src.shape[0]

    @property
    def edges(self) -> list[Edge]:
        return [
            Edge(int(s), int(d), tuple(int(v) for v in o), float(r))
            for s, d, o, r in zip(
                self.edge_src, self.edge_dst, self.edge_offsets, self.edge_distances
            )
        ]


def periodic_neighbors(structure: CrystalStructure, config: GraphConfig) -> list[Edge]:
    """Up-to-``max_neighbors`` nearest periodic neighbors of every site.

    Image offsets range over the minimal supercell that is guaranteed to
    contain every neighbor within the cutoff. Edges are sorted per source by
    (distance, dst, offset); the self-image (i == j, zero offset) is excluded.
    """
    cell = lattice_matrix(structure.lattice)
    frac = np.array([s.frac for s in structure.sites], dtype=np.float64)
    n = frac.shape[0]

    # plane spacing along axis k is 1/|inv(cell)[:, k]|; +1 covers in-cell offsets
    inv_norms = np.linalg.norm(np.linalg.inv(cell), axis=0)
    ranges = [int(math.ceil(config.cutoff * inv_norms[k])) + 1 for k in range(3)]
    offsets = np.array(
        [
            (h, k, l)
            for h in range(-ranges[0], ranges[0] + 1)
            for k in range(-ranges[1], ranges[1] + 1)
            for l in range(-ranges[2], ranges[2] + 1)
        ],
        dtype=np.int64,
    )

    edges: list[Edge] = []
    for i in range(n):
        # delta = (frac_j + offset) - frac_i, mapped through the cell matrix.
        # Spelled out componentwise (not BLAS) so distances are bit-reproducible
        # by any scalar reimplementation of the same formula.
        dx = frac[None, :, 0] + offsets[:, None, 0] - frac[i, 0]
        dy = frac[None, :, 1] + offsets[:, None, 1] - frac[i, 1]
        dz = frac[None, :, 2] + offsets[:, None, 2] - frac[i, 2]
        cx = dx * cell[0, 0] + dy * cell[1, 0] + dz * cell[2, 0]
        cy = dx * cell[0, 1] + dy * cell[1, 1] + dz * cell[2, 1]
        cz = dx * cell[0, 2] + dy * cell[1, 2] + dz * cell[2, 2]
        dists = np.sqrt(cx * cx + cy * cy + cz * cz)
        candidates = []
        for oi in range(len(offsets)):
            for j in range(n):
                d = dists[oi, j]
                if d > config.cutoff:
                    continue
                off = (int(offsets[oi, 0]), int(offsets[oi, 1]), int(offsets[oi, 2]))
                if j == i and off == (0, 0, 0):
                    continue
                candidates.append((d, j, off))
        if not candidates:
            raise IsolatedAtom(
                f"site {i} ({structure.sites[i].element}) has no neighbor within "
                f"{config.cutoff} A in structure {structure.id!r}"
            )
        candidates.sort(key=lambda c: (c[0], c[1], c[2]))
        for d, j, off in candidates[: config.max_neighbors]:
            edges.append(Edge(src=i, dst=j, offset=off, distance=d))
    return edges


def gaussian_expand(distance: float, config: GraphConfig) -> np.ndarray:
    """Evaluate Gaussians centered on the radial grid at the given distance."""
    centers = config.gauss_min + config.gauss_step * np.arange(
        config.n_edge_features, dtype=np.float64
    )
    return np.exp(-((distance - centers) ** 2) / config.gauss_sigma**2)


def build_graph(structure: CrystalStructure, config: GraphConfig | None = None) -> CrystalGraph:
    config = config or GraphConfig()
    edges = periodic_neighbors(structure, config)
    node_features = np.zeros((structure.n_sites, N_ELEMENT_FEATURES), dtype=np.float32)
    for k, site in enumerate(structure.sites):
        node_features[k, atomic_number(site.element) - 1] = 1.0
    edge_src = np.array([e.src for e in edges], dtype=np.int32)
    edge_dst = np.array([e.dst for e in edges], dtype=np.int32)
    edge_offsets = np.array([e.offset for e in edges], dtype=np.int32).reshape(-1, 3)
    edge_distances = np.array([e.distance for e in edges], dtype=np.float64)
    edge_features = np.stack(
        [gaussian_expand(e.distance, config) for e in edges]
    ).astype(np.float32)
    return CrystalGraph(
        node_features=node_features,
        edge_src=edge_src,
        edge_dst=edge_dst,
        edge_offsets=edge_offsets,
        edge_distances=edge_distances,
        edge_features=edge_features,
    )


# ---------------------------------------------------------------------------
# binary graph cache
# ---------------------------------------------------------------------------

def serialize_graph(graph_id: str, graph: CrystalGraph) -> bytes:
    """One cache record: id, counts, then the arrays as little-endian bytes."""
    id_bytes = graph_id.encode("utf-8")
    parts = [
        struct.pack("<I", len(id_bytes)),
        id_bytes,
        struct.pack(
            "<IIII",
            graph.n_nodes,
            graph.n_edges,
            graph.node_features.shape[1],
            graph.edge_features.shape[1],
        ),
        np.ascontiguousarray(graph.node_features, dtype="<f4").tobytes(),
        np.ascontiguousarray(graph.edge_src, dtype="<i4").tobytes(),
        np.ascontiguousarray(graph.edge_dst, dtype="<i4").tobytes(),
        np.ascontiguousarray(graph.edge_offsets, dtype="<i4").tobytes(),
        np.ascontiguousarray(graph.edge_distances, dtype="<f4").tobytes(),
        np.ascontiguousarray(graph.edge_features, dtype="<f4").tobytes(),
    ]
    return b"".join(parts)


def write_graph_cache(path, graphs: dict[str, CrystalGraph]) -> None:
    header = _CACHE_MAGIC + struct.pack("<II", _CACHE_VERSION, len(graphs))
    assert len(header) == 16
    with open(path, "wb") as fh:
        fh.write(header)
        for graph_id in graphs:
            fh.write(serialize_graph(graph_id, graphs[graph_id]))


def read_graph_cache(path) -> dict[str, CrystalGraph]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != _CACHE_MAGIC:
        raise ValueError("not a graph cache file")
    version, count = struct.unpack("<II", blob[8:16])
    if version != _CACHE_VERSION:
        raise ValueError(f"unsupported graph cache version {version}")
    graphs: dict[str, CrystalGraph] = {}
    pos = 16
    for _ in range(count):
        (id_len,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        graph_id = blob[pos:pos + id_len].decode("utf-8")
        pos += id_len
        n_nodes, n_edges, f_atom, f_edge = struct.unpack_from("<IIII", blob, pos)
        pos += 16

        def take(count_, dtype, shape):
            nonlocal pos
            arr = np.frombuffer(blob, dtype=dtype, count=count_, offset=pos).reshape(shape)
            pos += arr.nbytes
            return arr.copy()

        node_features = take(n_nodes * f_atom, "<f4", (n_nodes, f_atom))
        edge_src = take(n_edges, "<i4", (n_edges,))
        edge_dst = take(n_edges, "<i4", (n_edges,))
        edge_offsets = take(n_edges * 3, "<i4", (n_edges, 3))
        edge_distances = take(n_edges, "<f4", (n_edges,)).astype(np.float64)
        edge_features = take(n_edges * f_edge, "<f4", (n_edges, f_edge))
        graphs[graph_id] = CrystalGraph(
            node_features=node_features,
            edge_src=edge_src,
            edge_dst=edge_dst,
            edge_offsets=edge_offsets,
            edge_distances=edge_distances,
            edge_features=edge_features,
        )
    return graphs


def graph_cache_meta(config: GraphConfig) -> str:
    """Config fingerprint stored next to a cache so stale caches are detected."""
    return json.dumps(
        {
            "cutoff": config.cutoff,
            "max_neighbors": config.max_neighbors,
            "gauss_min": config.gauss_min,
            "gauss_max": config.gauss_max,
            "gauss_step": config.gauss_step,
            "gauss_sigma": config.gauss_sigma,
        },
        sort_keys=True,
    )
