import numpy as np
import pytest

from crystaltext.errors import DegenerateLabels, EmptyIndex, NoMatches, NumericalWarning
from oracles import brute_force_ap, brute_force_auc

from crystaltext.retrieval import (
    BUILTIN_RULES,
    EmbeddingIndex,
    LabelRule,
    average_precision,
    balanced_ap,
    balanced_subsample,
    concept_centroid,
    evaluate_keywords,
    label_oracle,
    load_index,
    query,
    roc_auc,
    roc_curve,
    rule_for_keyword,
    save_index,
)


def unit_rows(rng, n, d):
    x = rng.normal(size=(n, d))
    return (x / np.linalg.norm(x, axis=1, keepdims=True)).astype(np.float32)


def make_index(rng, n=10, d=8, titles=None):
    matrix = unit_rows(rng, n, d)
    ids = [f"s{i:03d}" for i in range(n)]
    metadata = {
        ids[i]: {"title": (titles[i] if titles else f"structure {i}")} for i in range(n)
    }
    return EmbeddingIndex(ids=ids, matrix=matrix, metadata=metadata)


class TestQuery:
    def test_self_query_ranks_first(self):
        index = make_index(np.random.default_rng(0))
        hits = query(index, index.matrix[7], k=3)
        assert hits[0][0] == "s007"
        assert hits[0][1] == pytest.approx(1.0, abs=1e-6)

    def test_orthogonal_query_ties_break_by_id(self):
        n, d = 5, 6
        matrix = np.zeros((n, d), dtype=np.float32)
        for i in range(n):
            matrix[i, i] = 1.0
        index = EmbeddingIndex(
            ids=[f"s{i}" for i in range(n)], matrix=matrix,
            metadata={f"s{i}": {"title": ""} for i in range(n)},
        )
        q = np.zeros(d, dtype=np.float32)
        q[d - 1] = 1.0  # orthogonal to every row
        hits = query(index, q, k=n)
        assert [h[0] for h in hits] == ["s0", "s1", "s2", "s3", "s4"]
        assert all(h[1] == 0.0 for h in hits)

    def test_matches_brute_force_sort(self):
        rng = np.random.default_rng(1)
        index = make_index(rng, n=10)
        q = unit_rows(rng, 1, 8)[0]
        hits = query(index, q, k=10)
        scores = index.matrix @ q
        oracle = sorted(range(10), key=lambda i: (-scores[i], index.ids[i]))
        assert [h[0] for h in hits] == [index.ids[i] for i in oracle]

    def test_invariant_to_index_row_order(self):
        rng = np.random.default_rng(17)
        index = make_index(rng, n=12)
        q = unit_rows(rng, 1, 8)[0]
        perm = rng.permutation(12)
        shuffled = EmbeddingIndex(
            ids=[index.ids[i] for i in perm],
            matrix=index.matrix[perm],
            metadata=index.metadata,
        )
        assert query(index, q, 12) == query(shuffled, q, 12)

    def test_bad_k_and_empty(self):
        index = make_index(np.random.default_rng(2), n=4)
        with pytest.raises(ValueError):
            query(index, index.matrix[0], k=5)
        with pytest.raises(ValueError):
            query(index, index.matrix[0], k=0)
        empty = EmbeddingIndex(ids=[], matrix=np.zeros((0, 8), dtype=np.float32))
        with pytest.raises(EmptyIndex):
            query(empty, index.matrix[0], k=1)


class TestLabelOracle:
    def test_variation_match(self):
        rule = BUILTIN_RULES["superconductor"]
        assert label_oracle("Pressure-induced superconductivity in X", rule)

    def test_non_match(self):
        rule = BUILTIN_RULES["superconductor"]
        assert not label_oracle("A novel semiconductor device", rule)

    def test_plural_stem(self):
        rule = BUILTIN_RULES["thermoelectric"]
        assert label_oracle("Thermoelectrics of Zintl phases", rule)

    def test_extra_variants(self):
        rule = LabelRule("magnet", "magnet", extra_variants=("spintronic",))
        assert label_oracle("a spintronic device", rule)
        assert not label_oracle("an electronic device", rule)

    def test_generic_fallback_strips_plural(self):
        rule = rule_for_keyword("frameworks")
        assert rule.stem == "framework"
        assert label_oracle("porous framework solids", rule)

    def test_builtin_stems(self):
        assert BUILTIN_RULES["ferromagnetic"].stem == "ferromagnet"
        assert BUILTIN_RULES["electroluminescence"].stem == "electroluminescen"
        assert BUILTIN_RULES["semiconductor"].stem == "semiconduct"


class TestRocAuc:
    def test_perfect(self):
        assert roc_auc([0.9, 0.8, 0.1], [1, 1, 0]) == 1.0

    def test_all_ties(self):
        assert roc_auc([0.5, 0.5, 0.5, 0.5], [1, 0, 1, 0]) == 0.5

    def test_hand_case(self):
        assert roc_auc([0.9, 0.2, 0.5, 0.4], [1, 0, 0, 1]) == pytest.approx(0.75, abs=1e-12)

    def test_degenerate(self):
        with pytest.raises(DegenerateLabels):
            roc_auc([0.1, 0.2], [1, 1])

    def test_against_brute_force(self):
        rng = np.random.default_rng(3)
        for _ in range(300):
            n = int(rng.integers(2, 50))
            scores = rng.choice([0.1, 0.25, 0.5, 0.75, 0.9], size=n)  # force ties
            labels = rng.integers(0, 2, size=n)
            if labels.sum() in (0, n):
                continue
            assert abs(roc_auc(scores, labels) - brute_force_auc(scores, labels)) <= 1e-12

    def test_invariant_under_monotone_transform(self):
        rng = np.random.default_rng(4)
        scores = rng.normal(size=40)
        labels = rng.integers(0, 2, size=40)
        labels[0], labels[1] = 0, 1
        base = roc_auc(scores, labels)
        assert roc_auc(np.exp(scores), labels) == pytest.approx(base, abs=1e-12)
        assert roc_auc(3 * scores + 7, labels) == pytest.approx(base, abs=1e-12)


class TestAveragePrecision:
    def test_perfect_order(self):
        assert average_precision([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0

    def test_alternating(self):
        got = average_precision([0.9, 0.8, 0.7, 0.6], [1, 0, 1, 0])
        assert got == pytest.approx(5.0 / 6.0, abs=1e-12)

    def test_single_positive_rank_two(self):
        assert average_precision([0.9, 0.8], [0, 1]) == pytest.approx(0.5, abs=1e-12)

    def test_degenerate(self):
        with pytest.raises(DegenerateLabels):
            average_precision([0.5], [0])

    def test_against_brute_force(self):
        rng = np.random.default_rng(5)
        for _ in range(300):
            n = int(rng.integers(1, 60))
            scores = rng.choice([0.2, 0.4, 0.6, 0.8], size=n)
            labels = rng.integers(0, 2, size=n)
            if labels.sum() == 0:
                continue
            got = average_precision(scores, labels)
            want = brute_force_ap(scores, labels)
            assert abs(got - want) <= 1e-12


class TestBalancedAp:
    def index_with_labels(self, rng, n_pos, n_neg):
        titles = (["superconducting wires"] * n_pos) + (["boring rocks"] * n_neg)
        index = make_index(rng, n=n_pos + n_neg, titles=titles)
        return index

    def test_subset_size(self):
        labels = np.array([1] * 5 + [0] * 100, dtype=bool)
        subset = balanced_subsample(labels, seed=0)
        assert len(subset) == 10
        assert labels[subset].sum() == 5

    def test_perfect_separation_any_seed(self):
        # positives constructed to score above every negative
        rng = np.random.default_rng(6)
        n_pos, n_neg, d = 4, 30, 8
        matrix = np.zeros((n_pos + n_neg, d), dtype=np.float32)
        matrix[:n_pos, 0] = 1.0
        noise = rng.normal(size=(n_neg, d - 1))
        matrix[n_pos:, 1:] = noise / np.linalg.norm(noise, axis=1, keepdims=True)
        titles = ["superconducting wires"] * n_pos + ["boring rocks"] * n_neg
        index = EmbeddingIndex(
            ids=[f"s{i:03d}" for i in range(n_pos + n_neg)],
            matrix=matrix,
            metadata={f"s{i:03d}": {"title": titles[i]} for i in range(n_pos + n_neg)},
        )
        rule = BUILTIN_RULES["superconductor"]
        q = np.zeros(d, dtype=np.float32)
        q[0] = 1.0
        for seed in range(5):
            assert balanced_ap(index, q, rule, seed=seed) == 1.0

    def test_deterministic_subsample(self):
        labels = np.random.default_rng(7).integers(0, 2, size=50).astype(bool)
        labels[0] = True
        a = balanced_subsample(labels, seed=3)
        b = balanced_subsample(labels, seed=3)
        assert np.array_equal(a, b)


class TestConceptCentroid:
    def test_single_match_returns_row(self):
        rng = np.random.default_rng(8)
        titles = ["superconductor alpha"] + ["nothing"] * 4
        index = make_index(rng, n=5, titles=titles)
        centroid = concept_centroid(index, BUILTIN_RULES["superconductor"])
        assert np.allclose(centroid, index.matrix[0], atol=1e-6)

    def test_antipodal_matches_warn(self):
        matrix = np.array([[1.0, 0.0], [-1.0, 0.0]], dtype=np.float32)
        index = EmbeddingIndex(
            ids=["a", "b"], matrix=matrix,
            metadata={"a": {"title": "superconductor x"}, "b": {"title": "superconductor y"}},
        )
        with pytest.warns(NumericalWarning):
            centroid = concept_centroid(index, BUILTIN_RULES["superconductor"])
        assert np.allclose(centroid, 0.0)

    def test_three_matches_equal_scalar_oracle(self):
        rng = np.random.default_rng(9)
        titles = ["superconductivity a", "superconductors b", "superconducting c", "other"]
        index = make_index(rng, n=4, titles=titles)
        centroid = concept_centroid(index, BUILTIN_RULES["superconductor"])
        mean = index.matrix[:3].mean(axis=0)
        oracle = mean / np.linalg.norm(mean)
        assert np.allclose(centroid, oracle, atol=1e-9)

    def test_no_matches(self):
        index = make_index(np.random.default_rng(10), n=3)
        with pytest.raises(NoMatches):
            concept_centroid(index, BUILTIN_RULES["superconductor"])


class TestEvaluateKeywords:
    def encode(self, d=8):
        rng = np.random.default_rng(11)
        cache = {}

        def fn(keyword):
            if keyword not in cache:
                v = rng.normal(size=d)
                cache[keyword] = v / np.linalg.norm(v)
            return cache[keyword]

        return fn

    def test_degenerate_rule_gives_na_row(self):
        rng = np.random.default_rng(12)
        titles = ["superconducting x"] * 3 + ["plain y"] * 3
        index = make_index(rng, n=6, titles=titles)
        rules = [BUILTIN_RULES["superconductor"], BUILTIN_RULES["thermoelectric"]]
        rows, curves = evaluate_keywords(index, rules, self.encode())
        by_kw = {r.keyword: r for r in rows}
        assert by_kw["thermoelectric"].roc_auc is None
        assert by_kw["superconductor"].roc_auc is not None
        assert "superconductor" in curves and "thermoelectric" not in curves
        assert rows[-1].keyword == "mean"

    def test_identical_runs_identical_tables(self):
        rng = np.random.default_rng(13)
        titles = ["superconducting x", "ferroelectric y"] * 4
        index = make_index(rng, n=8, titles=titles)
        rules = [BUILTIN_RULES["superconductor"], BUILTIN_RULES["ferroelectric"]]
        r1, _ = evaluate_keywords(index, rules, self.encode(), seed=5)
        r2, _ = evaluate_keywords(index, rules, self.encode(), seed=5)
        assert r1 == r2


def test_roc_curve_endpoints_and_monotonicity():
    rng = np.random.default_rng(14)
    scores = rng.normal(size=30)
    labels = rng.integers(0, 2, size=30)
    labels[0], labels[1] = 1, 0
    fpr, tpr = roc_curve(scores, labels)
    assert fpr[0] == 0.0 and tpr[0] == 0.0
    assert fpr[-1] == 1.0 and tpr[-1] == 1.0
    assert np.all(np.diff(fpr) >= 0) and np.all(np.diff(tpr) >= 0)


def test_index_save_load_roundtrip(tmp_path):
    rng = np.random.default_rng(15)
    index = make_index(rng, n=6)
    index.metadata["s000"]["structure"] = {"lattice": {"a": 2.0}}
    path = tmp_path / "index.ckpt"
    save_index(index, path)
    loaded = load_index(path)
    assert loaded.ids == index.ids
    assert np.allclose(loaded.matrix, index.matrix, atol=0)
    assert loaded.metadata["s000"]["structure"]["lattice"]["a"] == 2.0
    assert (tmp_path / "index.ckpt.jsonl").exists()


def test_index_validates_unit_rows():
    with pytest.raises(ValueError, match="unit-norm"):
        EmbeddingIndex(ids=["a"], matrix=np.array([[2.0, 0.0]], dtype=np.float32))
    with pytest.raises(ValueError, match="unique"):
        EmbeddingIndex(
            ids=["a", "a"],
            matrix=np.array([[1.0, 0.0], [0.0, 1.0]], dtype=np.float32),
        )
