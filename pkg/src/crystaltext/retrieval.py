"""Zero-shot text-to-structure screening and its evaluation metrics.

An index is a frozen matrix of unit-norm structure embeddings plus id and
title metadata. Queries are embeddings (from the text encoder or a concept
centroid); scoring is an exact dense cosine scan. Ground truth for a
keyword comes from a stem rule over the paper titles, and performance is
summarized by tie-aware ROC-AUC on the full set plus average precision on
a positives-balanced subsample.
"""

from __future__ import annotations

import csv
import json
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .encoders import split_words
from .errors import DegenerateLabels, EmptyIndex, NoMatches, NumericalWarning

logger = logging.getLogger(__name__)


@dataclass
class EmbeddingIndex:
    ids: list[str]
    matrix: np.ndarray                       # n x D, unit-norm rows
    metadata: dict[str, dict] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.ids) != self.matrix.shape[0]:
            raise ValueError("ids and matrix rows are misaligned")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("index ids must be unique")
        if self.matrix.size:
            norms = np.linalg.norm(self.matrix, axis=1)
            if np.any(np.abs(norms - 1.0) > 1e-5):
                raise ValueError("index rows must be unit-norm within 1e-5")

    @property
    def n(self) -> int:
        return len(self.ids)

    def title(self, struct_id: str) -> str:
        return self.metadata.get(struct_id, {}).get("title", "")


def save_index(index: EmbeddingIndex, path) -> None:
    """Tensor file for the matrix plus a JSONL id/metadata sidecar."""
    save_checkpoint(path, {"embeddings": index.matrix}, meta={"n": index.n})
    sidecar = str(path) + ".jsonl"
    with open(sidecar, "w", encoding="utf-8") as fh:
        for struct_id in index.ids:
            record = {"id": struct_id, "metadata": index.metadata.get(struct_id, {})}
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def load_index(path) -> EmbeddingIndex:
    tensors, _meta = load_checkpoint(path)
    matrix = tensors["embeddings"]
    ids: list[str] = []
    metadata: dict[str, dict] = {}
    with open(str(path) + ".jsonl", encoding="utf-8") as fh:
        for line in fh:
            record = json.loads(line)
            ids.append(record["id"])
            metadata[record["id"]] = record.get("metadata", {})
    return EmbeddingIndex(ids=ids, matrix=matrix, metadata=metadata)


def query(index: EmbeddingIndex, q: np.ndarray, k: int) -> list[tuple[str, float]]:
    """Top-k ids by cosine, descending; exact ties resolved by id ascending."""
    if index.n == 0:
        raise EmptyIndex("cannot query an empty index")
    if not 1 <= k <= index.n:
        raise ValueError(f"k must be in [1, {index.n}], got {k}")
    scores = index.matrix @ np.asarray(q, dtype=index.matrix.dtype)
    order = sorted(range(index.n), key=lambda i: (-scores[i], index.ids[i]))
    return [(index.ids[i], float(scores[i])) for i in order[:k]]


# ---------------------------------------------------------------------------
# keyword label rules
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LabelRule:
    keyword: str
    stem: str
    extra_variants: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.stem or self.stem != self.stem.lower():
            raise ValueError("stem must be nonempty lowercase")


BUILTIN_RULES = {
    "ferromagnetic": LabelRule("ferromagnetic", "ferromagnet"),
    "ferroelectric": LabelRule("ferroelectric", "ferroelectric"),
    "semiconductor": LabelRule("semiconductor", "semiconduct"),
    "superconductor": LabelRule("superconductor", "superconduct"),
    "electroluminescence": LabelRule("electroluminescence", "electroluminescen"),
    "thermoelectric": LabelRule("thermoelectric", "thermoelectric"),
}


def rule_for_keyword(keyword: str) -> LabelRule:
    """Built-in rule when we have one; otherwise stem = keyword minus a plural s."""
    key = keyword.lower()
    if key in BUILTIN_RULES:
        return BUILTIN_RULES[key]
    stem = key[:-1] if key.endswith("s") and len(key) > 1 else key
    return LabelRule(keyword, stem)


def label_oracle(title: str, rule: LabelRule) -> bool:
    """True iff some title token starts with the stem or equals a variant."""
    variants = {v.lower() for v in rule.extra_variants}
    for token in split_words(title):
        if token.startswith(rule.stem) or token in variants:
            return True
    return False


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def _average_ranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks, ties sharing the average of their rank range."""
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(len(scores), dtype=np.float64)
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and scores[order[j + 1]] == scores[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def roc_auc(scores, labels) -> float:
    """Tie-aware rank statistic: P(random positive outranks random negative)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabels("roc_auc needs at least one positive and one negative")
    ranks = _average_ranks(scores)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def average_precision(scores, labels) -> float:
    """Mean precision at the rank of each positive, scores descending.

    Ties keep the stable input order, so the value is deterministic.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    if not labels.any():
        raise DegenerateLabels("average_precision needs at least one positive")
    order = np.argsort(-scores, kind="stable")
    hits = 0
    precisions = []
    for rank, idx in enumerate(order, start=1):
        if labels[idx]:
            hits += 1
            precisions.append(hits / rank)
    return float(np.mean(precisions))


def roc_curve(scores, labels):
    """(fpr, tpr) arrays over descending score thresholds, from (0,0) to (1,1)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabels("roc_curve needs both classes")
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    tps = np.cumsum(sorted_labels)
    fps = np.cumsum(~sorted_labels)
    # keep only the last index of each tied-score run
    keep = np.r_[sorted_scores[1:] != sorted_scores[:-1], True]
    tpr = np.r_[0.0, tps[keep] / n_pos]
    fpr = np.r_[0.0, fps[keep] / n_neg]
    return fpr, tpr


def balanced_subsample(labels, seed: int) -> np.ndarray:
    """Indices keeping every positive plus an equal-count negative draw."""
    labels = np.asarray(labels, dtype=bool)
    pos = np.flatnonzero(labels)
    neg = np.flatnonzero(~labels)
    if len(pos) == 0:
        raise DegenerateLabels("balanced subsample needs at least one positive")
    rng = np.random.default_rng(seed)
    take = min(len(pos), len(neg))
    chosen = rng.choice(neg, size=take, replace=False) if take else np.array([], dtype=int)
    return np.sort(np.concatenate([pos, chosen]))


def balanced_ap(index: EmbeddingIndex, q: np.ndarray, rule: LabelRule, seed: int) -> float:
    """AP after downsampling negatives to match the positive count."""
    scores = index.matrix @ np.asarray(q, dtype=index.matrix.dtype)
    labels = np.array([label_oracle(index.title(i), rule) for i in index.ids], dtype=bool)
    subset = balanced_subsample(labels, seed)
    return average_precision(scores[subset], labels[subset])


def concept_centroid(index: EmbeddingIndex, rule: LabelRule) -> np.ndarray:
    """Normalized mean embedding of the structures whose titles match the rule."""
    mask = np.array([label_oracle(index.title(i), rule) for i in index.ids], dtype=bool)
    if not mask.any():
        raise NoMatches(f"no reference structure matches {rule.keyword!r}")
    mean = index.matrix[mask].mean(axis=0)
    norm = np.linalg.norm(mean)
    if norm < 1e-12:
        warnings.warn(
            f"concept centroid for {rule.keyword!r} is the zero vector", NumericalWarning
        )
        return np.zeros_like(mean)
    return (mean / norm).astype(index.matrix.dtype)


# ---------------------------------------------------------------------------
# keyword evaluation tables
# ---------------------------------------------------------------------------

@dataclass
class KeywordResult:
    keyword: str
    n_pos: int
    roc_auc: float | None
    balanced_ap: float | None


def evaluate_keywords(
    index: EmbeddingIndex,
    rules: list[LabelRule],
    encode_fn,
    seed: int = 0,
) -> tuple[list[KeywordResult], dict[str, tuple[np.ndarray, np.ndarray]]]:
    """Score every keyword; degenerate label sets yield an n/a row, not a crash.

    Returns the per-keyword rows (mean appended last under keyword "mean")
    and the ROC curve points per keyword.
    """
    if not rules:
        raise ValueError("evaluate_keywords needs at least one rule")
    rows: list[KeywordResult] = []
    curves: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    for rule in rules:
        q = encode_fn(rule.keyword)
        scores = index.matrix @ np.asarray(q, dtype=index.matrix.dtype)
        labels = np.array(
            [label_oracle(index.title(i), rule) for i in index.ids], dtype=bool
        )
        n_pos = int(labels.sum())
        try:
            auc = roc_auc(scores, labels)
            subset = balanced_subsample(labels, seed)
            ap = average_precision(scores[subset], labels[subset])
            curves[rule.keyword] = roc_curve(scores, labels)
        except DegenerateLabels:
            logger.warning("keyword %r has a degenerate label set (n_pos=%d)", rule.keyword, n_pos)
            rows.append(KeywordResult(rule.keyword, n_pos, None, None))
            continue
        rows.append(KeywordResult(rule.keyword, n_pos, auc, ap))
    scored = [r for r in rows if r.roc_auc is not None]
    if scored:
        rows.append(
            KeywordResult(
                "mean",
                sum(r.n_pos for r in scored),
                float(np.mean([r.roc_auc for r in scored])),
                float(np.mean([r.balanced_ap for r in scored])),
            )
        )
    return rows, curves


def mean_roc_auc(
    index: EmbeddingIndex, rules: list[LabelRule], encode_fn
) -> float | None:
    """Mean ROC-AUC across the keywords that have both classes present."""
    values = []
    for rule in rules:
        q = encode_fn(rule.keyword)
        scores = index.matrix @ np.asarray(q, dtype=index.matrix.dtype)
        labels = np.array(
            [label_oracle(index.title(i), rule) for i in index.ids], dtype=bool
        )
        try:
            values.append(roc_auc(scores, labels))
        except DegenerateLabels:
            continue
    return float(np.mean(values)) if values else None


def write_metrics_csv(rows: list[KeywordResult], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["keyword", "n_pos", "roc_auc", "balanced_ap"])
        for row in rows:
            writer.writerow(
                [
                    row.keyword,
                    row.n_pos,
                    "n/a" if row.roc_auc is None else f"{row.roc_auc:.6f}",
                    "n/a" if row.balanced_ap is None else f"{row.balanced_ap:.6f}",
                ]
            )


def write_curve_csv(fpr: np.ndarray, tpr: np.ndarray, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fpr", "tpr"])
        for f, t in zip(fpr, tpr):
            writer.writerow([f"{f:.6f}", f"{t:.6f}"])
