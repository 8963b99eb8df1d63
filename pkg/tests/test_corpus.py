import json

import numpy as np
import pytest

from crystaltext import cifio
from crystaltext.clients import StubDoiClient, StubLlmClient
from crystaltext.corpus import (
    CorpusRecord,
    KeywordFilter,
    family_keywords,
    fetch_abstracts,
    generate_keywords,
    ingest,
    keyword_corpus,
    keyword_prompt,
    load_corpus,
    save_corpus,
    split,
    split_counts,
    synth_toy_corpus,
)
from crystaltext.errors import DuplicateId, EmptyCorpus


def write_toy_cif(path, n_sites=1, a=4.0):
    lattice = cifio.LatticeParams(a, a, a, 90.0, 90.0, 90.0)
    per_axis = max(1, int(np.ceil(n_sites ** (1 / 3))))
    sites = []
    for i in range(per_axis):
        for j in range(per_axis):
            for k in range(per_axis):
                if len(sites) < n_sites:
                    sites.append(
                        cifio.AtomSite("C", (i / per_axis, j / per_axis, k / per_axis))
                    )
    structure = cifio.CrystalStructure(id=path.stem, lattice=lattice, sites=sites)
    path.write_text(cifio.write_cif(structure), encoding="utf-8")


def write_manifest(path, rows):
    lines = ["id,cif_path,title,doi"]
    lines += [",".join(str(v) for v in row) for row in rows]
    path.write_text("\n".join(lines), encoding="utf-8")


class TestIngest:
    def test_oversize_structure_excluded(self, tmp_path, caplog):
        for name, n in [("ok1", 2), ("ok2", 3), ("big", 501)]:
            write_toy_cif(tmp_path / f"{name}.cif", n_sites=n, a=40.0 if n > 100 else 4.0)
        manifest = tmp_path / "manifest.csv"
        write_manifest(
            manifest,
            [
                ("s1", "ok1.cif", "title one", "10.1/a"),
                ("s2", "ok2.cif", "title two", "10.1/b"),
                ("s3", "big.cif", "title three", "10.1/c"),
            ],
        )
        with caplog.at_level("WARNING"):
            records = ingest(manifest)
        assert [r.id for r in records] == ["s1", "s2"]
        assert any("s3" in rec.message for rec in caplog.records)

    def test_duplicate_id(self, tmp_path):
        write_toy_cif(tmp_path / "x.cif")
        manifest = tmp_path / "manifest.csv"
        write_manifest(manifest, [("dup", "x.cif", "t", ""), ("dup", "x.cif", "t", "")])
        with pytest.raises(DuplicateId, match="dup"):
            ingest(manifest)

    def test_empty_manifest(self, tmp_path):
        manifest = tmp_path / "manifest.csv"
        write_manifest(manifest, [])
        with pytest.raises(EmptyCorpus):
            ingest(manifest)

    def test_jsonl_manifest(self, tmp_path):
        write_toy_cif(tmp_path / "x.cif")
        manifest = tmp_path / "manifest.jsonl"
        manifest.write_text(
            json.dumps({"id": "a", "cif_path": "x.cif", "title": "t", "doi": None}) + "\n"
        )
        records = ingest(manifest)
        assert records[0].id == "a"


class TestSplit:
    def records(self, n):
        return [CorpusRecord(id=str(i), cif_path="", title=f"t{i}") for i in range(n)]

    def test_ten_records(self):
        records = split(self.records(10), seed=0)
        assert split_counts(records) == {"train": 8, "val": 1, "test": 1}

    def test_published_corpus_counts(self):
        records = split(self.records(406_048), seed=0)
        counts = split_counts(records)
        assert abs(counts["train"] - 324_838) <= 1
        assert abs(counts["val"] - 40_604) <= 1
        assert abs(counts["test"] - 40_606) <= 1
        assert sum(counts.values()) == 406_048

    def test_deterministic(self):
        a = split(self.records(100), seed=42)
        b = split(self.records(100), seed=42)
        assert [r.split for r in a] == [r.split for r in b]

    def test_partition(self):
        records = split(self.records(97), seed=3)
        assert all(r.split in ("train", "val", "test") for r in records)


class TestFetchAbstracts:
    def records(self):
        return [
            CorpusRecord(id="a", cif_path="", title="t", doi="10.1/a"),
            CorpusRecord(id="b", cif_path="", title="t", doi="10.1/b"),
            CorpusRecord(id="c", cif_path="", title="t", doi="10.1/c"),
        ]

    def test_partial_fixture(self):
        records = self.records()
        client = StubDoiClient(abstracts={"10.1/a": "alpha", "10.1/c": "gamma"})
        fetched = fetch_abstracts(records, client, backoff_base=0.0)
        assert fetched == 2
        assert records[0].abstract == "alpha"
        assert records[1].abstract is None
        assert records[2].abstract == "gamma"

    def test_repeated_failure_skips_and_continues(self, caplog):
        records = self.records()
        client = StubDoiClient(
            abstracts={"10.1/a": "alpha", "10.1/b": "beta", "10.1/c": "gamma"},
            failures={"10.1/b": 3},
        )
        with caplog.at_level("WARNING"):
            fetched = fetch_abstracts(records, client, retries=3, backoff_base=0.0)
        assert fetched == 2
        assert records[1].abstract is None
        assert any("10.1/b" in r.message or "b" in r.message for r in caplog.records)

    def test_resume_makes_no_calls(self):
        records = self.records()
        for r in records:
            r.abstract = "done"
        client = StubDoiClient(abstracts={})
        fetch_abstracts(records, client, backoff_base=0.0)
        assert client.calls == 0


class TestGenerateKeywords:
    def record(self):
        return CorpusRecord(
            id="r1", cif_path="", title="A porous framework", doi="10.1/r1",
            abstract="We report a porous material.",
        )

    def test_blocklist_applied(self):
        record = self.record()
        client = StubLlmClient(keywords_by_id={"r1": ["Crystal Structure", "Superconductivity"]})
        generated = generate_keywords([record], client)
        assert generated == 1
        assert record.keywords == ["Superconductivity"]

    def test_fully_blocklisted_record_dropped(self):
        record = self.record()
        client = StubLlmClient(keywords_by_id={"r1": ["Crystal Structure", "X-ray Diffraction"]})
        generated = generate_keywords([record], client)
        assert generated == 0
        assert record.keywords is None
        assert keyword_corpus([record]) == []

    def test_truncated_to_ten(self):
        record = self.record()
        client = StubLlmClient(keywords_by_id={"r1": [f"kw{i}" for i in range(11)]})
        generate_keywords([record], client)
        assert len(record.keywords) == 10
        assert record.keywords == [f"kw{i}" for i in range(10)]

    def test_missing_abstract_skipped_silently(self):
        record = self.record()
        record.abstract = None
        client = StubLlmClient(keywords_by_id={"r1": ["anything"]})
        generate_keywords([record], client)
        assert client.calls == 0
        assert record.keywords is None

    def test_bad_json_retried_then_skipped(self, caplog):
        record = self.record()
        client = StubLlmClient(keywords_by_id={"r1": "this is not json {"})
        with caplog.at_level("WARNING"):
            generated = generate_keywords([record], client)
        assert generated == 0
        assert client.calls == 2  # one retry
        assert record.keywords is None

    def test_prompt_substitution(self):
        prompt = keyword_prompt("0042", "A Title", "An abstract.")
        assert "ID: 0042" in prompt
        assert "Title: A Title" in prompt
        assert "Abstract: An abstract." in prompt
        assert "list up to 10 keywords in English" in prompt
        assert "{material_id}" not in prompt


class TestKeywordFilter:
    def test_defaults(self):
        f = KeywordFilter()
        assert "single-crystal x-ray diffraction" in f.blocklist

    def test_idempotent(self):
        f = KeywordFilter()
        keywords = ["Neutron Diffraction", "Thermoelectric", "powder diffraction"]
        once = f.apply(keywords)
        assert once == ["Thermoelectric"]
        assert f.apply(once) == once

    def test_validation(self):
        with pytest.raises(ValueError):
            KeywordFilter(blocklist=["Mixed Case"])


class TestSynthCorpus:
    def test_deterministic_bytes(self, tmp_path):
        a_dir, b_dir = tmp_path / "a", tmp_path / "b"
        synth_toy_corpus(a_dir, seed=1, n_per_class=5)
        synth_toy_corpus(b_dir, seed=1, n_per_class=5)
        assert (a_dir / "corpus.jsonl").read_text() == (b_dir / "corpus.jsonl").read_text()
        for cif in sorted((a_dir / "cifs").iterdir()):
            assert cif.read_text() == (b_dir / "cifs" / cif.name).read_text()

    def test_balanced_families(self, tmp_path):
        records = synth_toy_corpus(tmp_path, seed=1, n_per_class=50)
        assert len(records) == 200
        for family in "ABCD":
            assert sum(1 for r in records if r.id.startswith(family)) == 50

    def test_family_a_titles_contain_stem(self, tmp_path):
        records = synth_toy_corpus(tmp_path, seed=2, n_per_class=10)
        for record in records:
            if record.id.startswith("A"):
                tokens = record.title.lower().split()
                assert any(t.startswith("superconduct") for t in tokens), record.title

    def test_all_records_have_keywords_and_split(self, tmp_path):
        records = synth_toy_corpus(tmp_path, seed=3, n_per_class=4)
        assert all(r.keywords for r in records)
        assert all(r.split in ("train", "val", "test") for r in records)
        assert set(family_keywords()) == {
            "superconductor", "thermoelectric", "framework", "ferroelectric",
        }

    def test_cifs_parse_back(self, tmp_path):
        from pathlib import Path

        records = synth_toy_corpus(tmp_path, seed=4, n_per_class=2)
        for record in records:
            structure = cifio.load_structure(Path(record.cif_path).read_text())
            assert 1 <= structure.n_sites <= 8


def test_keyword_corpus_is_subset_per_split(tmp_path):
    records = synth_toy_corpus(tmp_path, seed=8, n_per_class=5)
    for record in records[::3]:
        record.keywords = None
    subset = keyword_corpus(records)
    ids = {r.id: r for r in records}
    for record in subset:
        assert record is ids[record.id]
        assert record.split == ids[record.id].split
    assert all(r.keywords for r in subset)


def test_corpus_jsonl_roundtrip(tmp_path):
    records = [
        CorpusRecord(id="a", cif_path="/x/a.cif", title="t a", doi="10.1/a",
                     abstract="abs", keywords=["k1", "k2"], split="train"),
        CorpusRecord(id="b", cif_path="/x/b.cif", title="t b"),
    ]
    path = tmp_path / "corpus.jsonl"
    save_corpus(records, path)
    loaded = load_corpus(path)
    assert loaded == records
