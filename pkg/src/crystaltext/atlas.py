"""Embedding-space cartography: clustering, 2-D projection, and coherence.

The atlas of an embedding index is its exact t-SNE projection, a k-means++
clustering, and a cluster-coherence analysis built from L1-normalized
TF-IDF word distributions of the paper titles: the divergence of cluster i's
mean distribution against the members of cluster j, symmetrized. Low
diagonal and high off-diagonal values mean coherent, well-separated
clusters.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass

import numpy as np

from .encoders import split_words
from .errors import (
    EmptyCluster,
    NotNormalized,
    PerplexityTooHigh,
    TooFewPoints,
)
from .retrieval import EmbeddingIndex

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# k-means++
# ---------------------------------------------------------------------------

@dataclass
class ClusterModel:
    k: int
    ids: list[str]
    labels: np.ndarray      # n ints in [0, k)
    centroids: np.ndarray   # k x D
    inertia: float

    @property
    def assignments(self) -> dict[str, int]:
        return {i: int(c) for i, c in zip(self.ids, self.labels)}

    def cluster_sizes(self) -> list[int]:
        return np.bincount(self.labels, minlength=self.k).tolist()


def _plusplus_seeds(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centroids = np.empty((k, x.shape[1]), dtype=x.dtype)
    centroids[0] = x[rng.integers(n)]
    dist_sq = ((x - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = dist_sq.sum()
        if total <= 0:
            centroids[j] = x[rng.integers(n)]
        else:
            centroids[j] = x[rng.choice(n, p=dist_sq / total)]
        dist_sq = np.minimum(dist_sq, ((x - centroids[j]) ** 2).sum(axis=1))
    return centroids


def kmeanspp(
    embeddings: np.ndarray,
    k: int,
    seed: int = 0,
    ids: list[str] | None = None,
    max_iters: int = 300,
) -> ClusterModel:
    """k-means++ seeding then Lloyd iterations to an assignment fixed point.

    An emptied cluster is re-seeded at the point farthest from its centroid
    assignment; ties in assignment go to the lowest cluster index.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    n = x.shape[0]
    if n < k or k < 1:
        raise TooFewPoints(f"cannot form {k} clusters from {n} points")
    rng = np.random.default_rng(seed)
    centroids = _plusplus_seeds(x, k, rng)
    labels = np.zeros(n, dtype=np.int64)
    for _ in range(max_iters):
        dists = ((x[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_labels = dists.argmin(axis=1)
        for j in range(k):
            members = new_labels == j
            if members.any():
                centroids[j] = x[members].mean(axis=0)
            else:
                farthest = dists[np.arange(n), new_labels].argmax()
                centroids[j] = x[farthest]
                new_labels[farthest] = j
        if np.array_equal(new_labels, labels):
            labels = new_labels
            break
        labels = new_labels
    inertia = float(((x - centroids[labels]) ** 2).sum())
    if ids is None:
        ids = [str(i) for i in range(n)]
    return ClusterModel(k=k, ids=list(ids), labels=labels, centroids=centroids, inertia=inertia)


# ---------------------------------------------------------------------------
# exact t-SNE
# ---------------------------------------------------------------------------

def conditional_probabilities(
    dist_sq: np.ndarray, perplexity: float, tol: float = 1e-5, max_steps: int = 50
):
    """Per-row Gaussian conditionals whose entropy (bits) hits log2(perplexity).

    Returns (P_conditional, betas); beta is 1/(2 sigma^2) found by binary
    search per row.
    """
    n = dist_sq.shape[0]
    target = math.log2(perplexity)
    P = np.zeros((n, n), dtype=np.float64)
    betas = np.ones(n, dtype=np.float64)
    for i in range(n):
        beta, beta_min, beta_max = 1.0, -np.inf, np.inf
        row = dist_sq[i].copy()
        row[i] = np.inf  # exclude self
        for _ in range(max_steps):
            p = np.exp(-row * beta)
            total = p.sum()
            if total <= 0:
                total = 1e-300
            p /= total
            nonzero = p > 0
            entropy = float(-(p[nonzero] * np.log2(p[nonzero])).sum())
            diff = entropy - target
            if abs(diff) <= tol:
                break
            if diff > 0:
                beta_min = beta
                beta = beta * 2.0 if beta_max == np.inf else (beta + beta_max) / 2.0
            else:
                beta_max = beta
                beta = beta / 2.0 if beta_min == -np.inf else (beta + beta_min) / 2.0
        P[i] = p
        betas[i] = beta
    return P, betas


def _joint_probabilities(x: np.ndarray, perplexity: float) -> np.ndarray:
    sq = ((x[:, None, :] - x[None, :, :]) ** 2).sum(axis=2)
    cond, _ = conditional_probabilities(sq, perplexity)
    P = (cond + cond.T) / (2.0 * x.shape[0])
    return np.maximum(P, 1e-12)


def _student_q(y: np.ndarray):
    sq = ((y[:, None, :] - y[None, :, :]) ** 2).sum(axis=2)
    w = 1.0 / (1.0 + sq)
    np.fill_diagonal(w, 0.0)
    total = w.sum()
    return np.maximum(w / total, 1e-12), w


def tsne_kl(P: np.ndarray, y: np.ndarray) -> float:
    """KL(P || Q) of the current 2-D layout (natural log)."""
    Q, _ = _student_q(y)
    mask = ~np.eye(P.shape[0], dtype=bool)
    return float((P[mask] * np.log(P[mask] / Q[mask])).sum())


def tsne_grad(P: np.ndarray, y: np.ndarray) -> np.ndarray:
    Q, w = _student_q(y)
    pq = (P - Q) * w
    # grad_i = 4 sum_j pq_ij (y_i - y_j)
    return 4.0 * (pq.sum(axis=1)[:, None] * y - pq @ y)


def tsne(
    embeddings: np.ndarray,
    perplexity: float = 30.0,
    seed: int = 0,
    iters: int = 1000,
    learning_rate: float | None = None,
) -> np.ndarray:
    """Exact O(n^2) t-SNE to 2-D.

    Early exaggeration (x12) for the first 250 iterations, momentum 0.5
    switching to 0.8 at iteration 250, and the standard per-coordinate
    adaptive gains. learning_rate=None picks max(n/48, 50).
    """
    x = np.asarray(embeddings, dtype=np.float64)
    n = x.shape[0]
    if n < 4:
        raise TooFewPoints(f"t-SNE needs at least 4 points, got {n}")
    if perplexity >= n:
        raise PerplexityTooHigh(f"perplexity {perplexity} must be < n = {n}")
    if learning_rate is None:
        learning_rate = max(n / 48.0, 50.0)
    P = _joint_probabilities(x, perplexity)
    rng = np.random.default_rng(seed)
    y = rng.normal(0.0, 1e-4, size=(n, 2))
    velocity = np.zeros_like(y)
    gains = np.ones_like(y)
    exaggeration_until = min(250, iters)
    for it in range(iters):
        P_eff = P * 12.0 if it < exaggeration_until else P
        grad = tsne_grad(P_eff, y)
        momentum = 0.5 if it < 250 else 0.8
        same_sign = np.sign(grad) == np.sign(velocity)
        gains = np.where(same_sign, gains * 0.8, gains + 0.2)
        np.clip(gains, 0.01, None, out=gains)
        velocity = momentum * velocity - learning_rate * gains * grad
        y = y + velocity
        y = y - y.mean(axis=0)
    return y


# ---------------------------------------------------------------------------
# TF-IDF title distributions
# ---------------------------------------------------------------------------

def tfidf_vectors(titles: dict[str, str]) -> dict[str, dict[str, float]]:
    """L1-normalized TF-IDF word distribution per document.

    idf is the smoothed ln((1+n)/(1+df)) + 1; empty titles are excluded
    with a log line so they cannot poison divergence averages.
    """
    if not titles:
        raise ValueError("tfidf needs at least one document")
    tokenized = {doc_id: split_words(title) for doc_id, title in titles.items()}
    df: dict[str, int] = {}
    for words in tokenized.values():
        for term in set(words):
            df[term] = df.get(term, 0) + 1
    n_docs = len(titles)
    idf = {term: math.log((1.0 + n_docs) / (1.0 + count)) + 1.0 for term, count in df.items()}
    vectors: dict[str, dict[str, float]] = {}
    for doc_id, words in tokenized.items():
        if not words:
            logger.warning("title of %s has no tokens; excluded from TF-IDF", doc_id)
            continue
        tf: dict[str, float] = {}
        for w in words:
            tf[w] = tf.get(w, 0.0) + 1.0
        weights = {term: count * idf[term] for term, count in tf.items()}
        total = math.fsum(weights.values())
        vectors[doc_id] = {term: w / total for term, w in weights.items()}
    return vectors


def jsd(p: dict[str, float], q: dict[str, float]) -> float:
    """Jensen-Shannon divergence, base 2, so the range is [0, 1].

    Disjoint supports are answered exactly: each side contributes 1/2.
    """
    for name, dist in (("p", p), ("q", q)):
        total = math.fsum(dist.values())
        if abs(total - 1.0) > 1e-6 or any(v < 0 for v in dist.values()):
            raise NotNormalized(f"{name} is not an L1-normalized distribution (sum {total})")
    support_p = {k for k, v in p.items() if v > 0}
    support_q = {k for k, v in q.items() if v > 0}
    if not support_p & support_q:
        return 1.0
    terms = []
    for k in support_p | support_q:
        pk = p.get(k, 0.0)
        qk = q.get(k, 0.0)
        mk = 0.5 * (pk + qk)
        if pk > 0:
            terms.append(0.5 * pk * math.log2(pk / mk))
        if qk > 0:
            terms.append(0.5 * qk * math.log2(qk / mk))
    return min(1.0, max(0.0, math.fsum(terms)))


@dataclass
class JsdMatrices:
    m_js: np.ndarray   # k x k, row i = centroid i vs members of cluster j
    m_sjs: np.ndarray  # symmetrized


def _mean_distribution(vectors: list[dict[str, float]]) -> dict[str, float]:
    # the mean of L1-normalized vectors is itself L1-normalized
    accum: dict[str, float] = {}
    for vec in vectors:
        for term, w in vec.items():
            accum[term] = accum.get(term, 0.0) + w
    n = len(vectors)
    mean = {term: w / n for term, w in accum.items()}
    total = math.fsum(mean.values())
    if abs(total - 1.0) > 1e-9:  # repair drift from float accumulation
        mean = {term: w / total for term, w in mean.items()}
    return mean


def jsd_matrix(
    cluster: ClusterModel, vectors: dict[str, dict[str, float]]
) -> tuple[JsdMatrices, list[dict[str, float]]]:
    """Per-cluster mean title distributions and the divergence matrices."""
    members: list[list[dict[str, float]]] = [[] for _ in range(cluster.k)]
    for doc_id, label in zip(cluster.ids, cluster.labels):
        if doc_id in vectors:
            members[label].append(vectors[doc_id])
    for j, group in enumerate(members):
        if not group:
            raise EmptyCluster(f"cluster {j} has no valid TF-IDF vectors")
    centroids = [_mean_distribution(group) for group in members]
    k = cluster.k
    m_js = np.zeros((k, k), dtype=np.float64)
    for i in range(k):
        for j in range(k):
            m_js[i, j] = float(np.mean([jsd(centroids[i], vec) for vec in members[j]]))
    m_sjs = (m_js + m_js.T) / 2.0
    return JsdMatrices(m_js=m_js, m_sjs=m_sjs), centroids


def cluster_labels_from_tfidf(
    cluster: ClusterModel, vectors: dict[str, dict[str, float]], top_k: int = 3
) -> list[str]:
    """Label each cluster with its highest-mean-TF-IDF terms."""
    labels = []
    for j in range(cluster.k):
        group = [vectors[i] for i, lab in zip(cluster.ids, cluster.labels)
                 if lab == j and i in vectors]
        if not group:
            labels.append(f"cluster {j}")
            continue
        mean = _mean_distribution(group)
        top = sorted(mean.items(), key=lambda kv: (-kv[1], kv[0]))[:top_k]
        labels.append(" / ".join(term for term, _ in top))
    return labels


# ---------------------------------------------------------------------------
# the assembled atlas
# ---------------------------------------------------------------------------

@dataclass
class AtlasModel:
    ids: list[str]
    coords: np.ndarray      # n x 2
    cluster: ClusterModel
    jsd: JsdMatrices
    cluster_names: list[str]


def heatmap_overlay(index: EmbeddingIndex, q: np.ndarray) -> np.ndarray:
    """Cosine of every indexed embedding against a unit query, clipped to [-1, 1]."""
    from .errors import EmptyIndex

    if index.n == 0:
        raise EmptyIndex("cannot overlay an empty index")
    values = index.matrix @ np.asarray(q, dtype=index.matrix.dtype)
    return np.clip(values, -1.0, 1.0)


def property_overlay(ids: list[str], csv_path) -> list[float | None]:
    """Per-point values from an external property file (CSV id,value rows).

    Ids absent from the file get None; the result aligns with the given id
    order, so it can color atlas points exactly like a similarity overlay.
    """
    import csv as csv_mod

    values: dict[str, float] = {}
    with open(csv_path, encoding="utf-8", newline="") as fh:
        for row in csv_mod.reader(fh):
            if not row or row[0].strip().lower() == "id":
                continue
            if len(row) < 2:
                raise ValueError(f"property row needs id,value: {row!r}")
            values[row[0].strip()] = float(row[1])
    return [values.get(i) for i in ids]


def build_atlas(
    index: EmbeddingIndex,
    k: int = 20,
    perplexity: float = 30.0,
    seed: int = 0,
    iters: int = 1000,
) -> AtlasModel:
    coords = tsne(index.matrix, perplexity=perplexity, seed=seed, iters=iters)
    cluster = kmeanspp(index.matrix, k, seed=seed, ids=index.ids)
    titles = {i: index.title(i) for i in index.ids}
    vectors = tfidf_vectors(titles)
    matrices, _centroids = jsd_matrix(cluster, vectors)
    names = cluster_labels_from_tfidf(cluster, vectors)
    return AtlasModel(
        ids=list(index.ids), coords=coords, cluster=cluster, jsd=matrices,
        cluster_names=names,
    )


def atlas_export(atlas: AtlasModel) -> dict:
    """The JSON document served to clients: points, clusters, divergences."""
    sizes = atlas.cluster.cluster_sizes()
    return {
        "points": [
            {
                "id": atlas.ids[i],
                "x": float(atlas.coords[i, 0]),
                "y": float(atlas.coords[i, 1]),
                "cluster": int(atlas.cluster.labels[i]),
            }
            for i in range(len(atlas.ids))
        ],
        "clusters": [
            {"id": j, "label": atlas.cluster_names[j], "size": sizes[j]}
            for j in range(atlas.cluster.k)
        ],
        "jsd": [[float(v) for v in row] for row in atlas.jsd.m_sjs],
    }


def save_atlas(atlas: AtlasModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(atlas_export(atlas), fh, sort_keys=True)


def load_atlas_export(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
