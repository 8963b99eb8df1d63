"""Corpus construction: ingestion, abstract fetching, keyword generation,
splitting, and a deterministic synthetic corpus for desk-scale experiments.

A corpus is a JSONL file of records, each pairing a structure (by CIF path)
with its publication title and, once enriched, an abstract and a filtered
keyword list. Network steps run through the client interfaces in
:mod:`crystaltext.clients` and are resumable.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import cifio
from .clients import DoiClient, LlmClient
from .errors import CrystalTextError, DuplicateId, EmptyCorpus, TooManySites

logger = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")


@dataclass
class CorpusRecord:
    id: str
    cif_path: str
    title: str
    doi: str | None = None
    abstract: str | None = None
    keywords: list[str] | None = None
    split: str | None = None

    def caption(self, mode: str) -> str:
        """The training caption: the title, or the keywords joined with ", "."""
        if mode == "title":
            return self.title
        if mode == "keywords":
            if not self.keywords:
                raise ValueError(f"record {self.id} has no keywords")
            return ", ".join(self.keywords)
        raise ValueError(f"unknown caption mode {mode!r}")


def save_corpus(records: list[CorpusRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(asdict(record), sort_keys=True) + "\n")


def load_corpus(path) -> list[CorpusRecord]:
    """Read a corpus; relative cif_paths resolve against the file's directory."""
    root = Path(path).parent
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                record = CorpusRecord(**json.loads(line))
                if record.cif_path and not Path(record.cif_path).is_absolute():
                    record.cif_path = str(root / record.cif_path)
                records.append(record)
    return records


# ---------------------------------------------------------------------------
# ingestion
# ---------------------------------------------------------------------------

def _manifest_rows(path) -> list[dict]:
    path = Path(path)
    rows = []
    if path.suffix.lower() in (".jsonl", ".ndjson"):
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    rows.append(json.loads(line))
    else:
        with open(path, encoding="utf-8", newline="") as fh:
            for row in csv.DictReader(fh):
                rows.append(row)
    return rows


def ingest(manifest_path, cif_root=None) -> list[CorpusRecord]:
    """Read a manifest (CSV or JSONL with id, cif_path, title, doi) and keep
    every row whose CIF parses, expands, and stays within the site limit.

    Bad rows and oversize/unparseable structures are logged and skipped;
    only an empty result is fatal.
    """
    rows = _manifest_rows(manifest_path)
    root = Path(cif_root) if cif_root else Path(manifest_path).parent
    records: list[CorpusRecord] = []
    seen: set[str] = set()
    for n, row in enumerate(rows, start=1):
        try:
            record_id = str(row["id"]).strip()
            cif_path = str(row["cif_path"]).strip()
            title = str(row["title"]).strip()
        except (KeyError, TypeError) as exc:
            logger.warning("manifest row %d is malformed: %s", n, exc)
            continue
        if not record_id or not cif_path or not title:
            logger.warning("manifest row %d lacks id/cif_path/title", n)
            continue
        if record_id in seen:
            raise DuplicateId(f"duplicate manifest id {record_id!r}")
        seen.add(record_id)
        doi = row.get("doi") or None
        full_path = Path(cif_path)
        if not full_path.is_absolute():
            full_path = root / full_path
        try:
            structure = cifio.load_structure(full_path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            logger.warning("excluding %s: CIF file %s not found", record_id, full_path)
            continue
        except TooManySites as exc:
            logger.warning("excluding %s: %s", record_id, exc)
            continue
        except CrystalTextError as exc:
            logger.warning("excluding %s: CIF parse failed: %s", record_id, exc)
            continue
        if structure.n_sites > cifio.MAX_SITES:
            logger.warning(
                "excluding %s: %d sites exceeds the %d-site limit",
                record_id, structure.n_sites, cifio.MAX_SITES,
            )
            continue
        records.append(
            CorpusRecord(id=record_id, cif_path=str(full_path), title=title, doi=doi)
        )
    if not records:
        raise EmptyCorpus(f"no usable records in manifest {manifest_path}")
    return records


def split(records: list[CorpusRecord], ratios=(8, 1, 1), seed: int = 0) -> list[CorpusRecord]:
    """Seeded shuffle, then contiguous assignment at the cumulative ratios."""
    if not records:
        raise EmptyCorpus("cannot split an empty record list")
    if len(ratios) != len(SPLITS) or any(r <= 0 for r in ratios):
        raise ValueError(f"ratios must be {len(SPLITS)} positive numbers")
    n = len(records)
    total = float(sum(ratios))
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    bounds = [int(np.floor(n * sum(ratios[: k + 1]) / total)) for k in range(len(ratios))]
    bounds[-1] = n
    start = 0
    for split_name, end in zip(SPLITS, bounds):
        for idx in order[start:end]:
            records[idx].split = split_name
        start = end
    return records


def split_counts(records: list[CorpusRecord]) -> dict[str, int]:
    counts = {name: 0 for name in SPLITS}
    for record in records:
        if record.split in counts:
            counts[record.split] += 1
    return counts


# ---------------------------------------------------------------------------
# abstract fetching
# ---------------------------------------------------------------------------

def fetch_abstracts(
    records: list[CorpusRecord],
    client: DoiClient,
    max_workers: int = 4,
    retries: int = 3,
    backoff_base: float = 0.5,
) -> int:
    """Fill in missing abstracts; resumable (already-fetched records skipped).

    Failures are retried with exponential backoff, then logged and skipped.
    Returns the number of abstracts newly stored.
    """
    pending = [r for r in records if r.abstract is None and r.doi]

    def fetch_one(record: CorpusRecord):
        for attempt in range(retries):
            try:
                return record, client.get_abstract(record.doi)
            except Exception as exc:
                if attempt + 1 == retries:
                    logger.warning("abstract fetch for %s failed after %d attempts: %s",
                                   record.id, retries, exc)
                    return record, None
                time.sleep(backoff_base * 2**attempt)

    fetched = 0
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        for record, abstract in pool.map(fetch_one, pending):
            if abstract:
                record.abstract = abstract
                fetched += 1
    return fetched


# ---------------------------------------------------------------------------
# keyword generation
# ---------------------------------------------------------------------------

MAX_KEYWORDS = 10

KEYWORD_PROMPT_TEMPLATE = '''Below are title-abstract pairs for materials science papers dealing with crystal structures. For each paper, list up to 10 keywords in English that describe the features, functions, or applications of the material discussed. Focus on the material itself, and do not include general terms or measurement techniques (e.g., Crystal Structure, Crystal Lattice, X-ray diffraction, Neutron Diffraction, Powder Diffraction). Return the results in json format with the following schema.

    **Example input 1:**
    ```
    ID: 0001
    Title: Enhancement of Critical Temperature in Layered Copper Oxide Superconductors via Lattice Compression Techniques
    Abstract: Superconductivity in copper oxides (cuprates) offers vast potential for technological applications due to their high critical temperatures (Tc). Our research presents a novel approach to enhance Tc in layered cuprate materials through the controlled application of lattice compression. Using advanced crystallographic methods, we systematically altered the interlayer spacing and analyzed the resultant changes in electronic properties. Our findings demonstrate a significant improvement in superconducting behavior at elevated temperatures, further supporting the unconventional mechanisms underpinning superconductivity in these materials.
    ```

    **Example output 1:**
    ```json
    [{
        "ID": "0001",
        "Keywords": ["High-Tc", "Cuprate Superconductors", "Lattice Compression", "Electronic Properties", "Layered Structures", "Superconducting Phase", "Temperature Enhancement", "Unconventional Superconductivity"]
    }]
    ```

    **Example input 2:**
    ```
    ID: 0002
    Title: Advancements in Biodegradable Polymers for Sustained Drug Delivery Systems
    Abstract: The development of biocompatible and biodegradable materials is critical in the field of medical implants and drug delivery systems. This paper examines the latest advancements in biodegradable polymers tailored for sustained release of therapeutic agents. We analyze various polymer compositions that provide controlled degradation rates and compatibility with a range of drugs. Our results show promising applications in long-term treatments, reducing the need for repeated administration and improving patient compliance.
    ```

    **Example output 2:**
    ```json
    [{
        "ID": "0002",
        "Keywords": ["Biomaterials", "Biodegradable Polymers", "Sustained Release", "Drug Delivery Systems", "Biocompatibility", "Controlled Degradation", "Therapeutic Agents", "Medical Implants", "Long-Term Treatment"]
    }]
    ```

    **Input :**
    ```
    ID: {material_id}
    Title: {title}
    Abstract: {abstract}
    ```

    **Output :**
    ```json
    '''


def keyword_prompt(material_id: str, title: str, abstract: str) -> str:
    return (
        KEYWORD_PROMPT_TEMPLATE
        .replace("{material_id}", material_id)
        .replace("{title}", title)
        .replace("{abstract}", abstract)
    )


@dataclass
class KeywordFilter:
    blocklist: list[str] = field(
        default_factory=lambda: [
            "crystal structure",
            "x-ray diffraction",
            "neutron diffraction",
            "powder diffraction",
            "single-crystal x-ray diffraction",
        ]
    )

    def __post_init__(self):
        for phrase in self.blocklist:
            if not phrase or phrase != phrase.lower():
                raise ValueError("blocklist phrases must be nonempty lowercase")

    def apply(self, keywords: list[str]) -> list[str]:
        """Drop blocklisted phrases (lowercase exact match); keeps casing."""
        return [k for k in keywords if k.strip().lower() not in self.blocklist]


def _parse_keyword_response(text: str, record_id: str) -> list[str]:
    """Extract the Keywords list from the JSON-array response schema."""
    candidate = text.strip()
    if candidate.startswith("```"):
        candidate = candidate.strip("`")
        if candidate.startswith("json"):
            candidate = candidate[4:]
    try:
        parsed = json.loads(candidate)
    except json.JSONDecodeError:
        start = candidate.find("[")
        end = candidate.rfind("]")
        if start == -1 or end <= start:
            raise
        parsed = json.loads(candidate[start:end + 1])
    if not isinstance(parsed, list):
        raise json.JSONDecodeError("expected a JSON array", candidate, 0)
    for entry in parsed:
        if isinstance(entry, dict) and str(entry.get("ID", "")) in ("", record_id):
            keywords = entry.get("Keywords", [])
            return [str(k) for k in keywords]
    return []


def generate_keywords(
    records: list[CorpusRecord],
    client: LlmClient,
    keyword_filter: KeywordFilter | None = None,
    max_workers: int = 4,
) -> int:
    """Generate and filter keywords for every record with a title and abstract.

    Responses are truncated to ten keywords and filtered against the
    blocklist; records whose keywords all fall away keep ``keywords=None``
    and therefore drop out of the keyword corpus. Returns the number of
    records that received keywords.
    """
    keyword_filter = keyword_filter or KeywordFilter()
    pending = [r for r in records if r.abstract and r.keywords is None]

    def generate_one(record: CorpusRecord):
        prompt = keyword_prompt(record.id, record.title, record.abstract)
        for attempt in range(2):
            response = client.complete(prompt)
            try:
                return record, _parse_keyword_response(response, record.id)
            except json.JSONDecodeError:
                if attempt == 1:
                    logger.warning("keyword response for %s is not valid JSON; skipping", record.id)
                    return record, None

    generated = 0
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        for record, keywords in pool.map(generate_one, pending):
            if keywords is None:
                continue
            kept = keyword_filter.apply(keywords[:MAX_KEYWORDS])
            if kept:
                record.keywords = kept
                generated += 1
            else:
                logger.info("record %s has no keywords left after filtering", record.id)
    return generated


def keyword_corpus(records: list[CorpusRecord]) -> list[CorpusRecord]:
    """The fine-tuning subset: records that still carry keywords, per split."""
    return [r for r in records if r.keywords]


# ---------------------------------------------------------------------------
# synthetic desk-scale corpus
# ---------------------------------------------------------------------------

_SHARED_DISTRACTORS = [
    "synthesis", "growth", "study", "behavior", "phase", "single", "crystal",
    "novel", "high", "quality", "analysis", "investigation",
]

_FAMILIES = {
    "A": {
        "keyword": "superconductor",
        "family_words": ["superconductor", "superconductivity", "superconducting"],
        "extras": ["critical temperature", "type-II response", "pairing", "cuprate analog"],
        "elements": ["Nb", "V", "Ta", "Pb", "Sn", "Hg"],
        "templates": [
            "Pressure induced {fam} in cubic {formula} {d1}",
            "{d1} and {fam} of elemental {formula} metal",
            "Emergent {fam} in {formula} under {d2} conditions",
        ],
        "keywords": ["superconductor", "critical temperature", "metallic conductor"],
    },
    "B": {
        "keyword": "thermoelectric",
        "family_words": ["thermoelectric", "thermoelectrics"],
        "extras": ["seebeck coefficient", "figure of merit", "zintl chemistry"],
        "elements": [("Pb", "Te"), ("Sn", "Te"), ("Ge", "Te"), ("Bi", "Se"), ("Sn", "Se")],
        "templates": [
            "{fam} performance of rocksalt {formula} {d1}",
            "Enhanced {fam} transport in {formula} {d2}",
            "{d1} of {formula}: a {fam} chalcogenide",
        ],
        "keywords": ["thermoelectric", "seebeck response", "narrow bandgap"],
    },
    "C": {
        "keyword": "framework",
        "family_words": ["framework", "frameworks"],
        "extras": ["porous topology", "gas adsorption", "open channels"],
        "elements": [("Zn", "O", "C"), ("Cu", "O", "C"), ("Zn", "N", "C"), ("Cu", "N", "C")],
        "templates": [
            "Porous metal organic {fam} {formula} for {d1}",
            "An open {formula} {fam} with {d2} channels",
            "{d1} in a microporous {formula} {fam}",
        ],
        "keywords": ["metal-organic framework", "porosity", "gas adsorption"],
    },
    "D": {
        "keyword": "ferroelectric",
        "family_words": ["ferroelectric", "ferroelectricity"],
        "extras": ["spontaneous polarization", "perovskite layers", "domain switching"],
        "elements": [("Ba", "Ti", "O"), ("Pb", "Ti", "O"), ("Bi", "Fe", "O"), ("K", "Nb", "O")],
        "templates": [
            "Layered {fam} response of {formula} {d1}",
            "{fam} polarization in {formula} thin layers {d2}",
            "{d1} driven {fam} ordering in {formula}",
        ],
        "keywords": ["ferroelectric", "polarization", "layered oxide"],
    },
}


def _family_structure(family: str, record_id: str, rng: np.random.Generator) -> cifio.CrystalStructure:
    spec = _FAMILIES[family]
    if family == "A":
        a = float(rng.uniform(2.5, 3.2))
        element = spec["elements"][rng.integers(len(spec["elements"]))]
        lattice = cifio.LatticeParams(a, a, a, 90.0, 90.0, 90.0)
        sites = [cifio.AtomSite(element, (0.0, 0.0, 0.0))]
    elif family == "B":
        a = float(rng.uniform(5.4, 6.4))
        cation, anion = spec["elements"][rng.integers(len(spec["elements"]))]
        lattice = cifio.LatticeParams(a, a, a, 90.0, 90.0, 90.0)
        cation_frac = [(0, 0, 0), (0.5, 0.5, 0), (0.5, 0, 0.5), (0, 0.5, 0.5)]
        anion_frac = [(0.5, 0, 0), (0, 0.5, 0), (0, 0, 0.5), (0.5, 0.5, 0.5)]
        sites = [cifio.AtomSite(cation, f) for f in cation_frac]
        sites += [cifio.AtomSite(anion, f) for f in anion_frac]
    elif family == "C":
        a = float(rng.uniform(12.0, 16.0))
        metal, hetero, carbon = spec["elements"][rng.integers(len(spec["elements"]))]
        lattice = cifio.LatticeParams(a, a, a, 90.0, 90.0, 90.0)
        sites = [
            cifio.AtomSite(metal, (0.0, 0.0, 0.0)),
            cifio.AtomSite(hetero, (0.28, 0.0, 0.0)),
            cifio.AtomSite(carbon, (0.28, 0.28, 0.0)),
            cifio.AtomSite(hetero, (0.0, 0.28, 0.0)),
            cifio.AtomSite(carbon, (0.0, 0.0, 0.28)),
        ]
    elif family == "D":
        a = float(rng.uniform(3.6, 4.2))
        c = float(rng.uniform(9.0, 12.0))
        big, small, oxygen = spec["elements"][rng.integers(len(spec["elements"]))]
        lattice = cifio.LatticeParams(a, a, c, 90.0, 90.0, 90.0)
        sites = [
            cifio.AtomSite(big, (0.0, 0.0, 0.0)),
            cifio.AtomSite(small, (0.5, 0.5, 0.13)),
            cifio.AtomSite(oxygen, (0.5, 0.5, 0.35)),
            cifio.AtomSite(oxygen, (0.0, 0.5, 0.5)),
        ]
    else:
        raise ValueError(f"unknown family {family!r}")
    return cifio.CrystalStructure(id=record_id, lattice=lattice, sites=sites)


def _formula(structure: cifio.CrystalStructure) -> str:
    counts: dict[str, int] = {}
    for site in structure.sites:
        counts[site.element] = counts.get(site.element, 0) + 1
    return "".join(
        f"{el}{n if n > 1 else ''}" for el, n in sorted(counts.items())
    )


def _family_title(family: str, formula: str, rng: np.random.Generator) -> str:
    spec = _FAMILIES[family]
    template = spec["templates"][rng.integers(len(spec["templates"]))]
    fam = spec["family_words"][rng.integers(len(spec["family_words"]))]
    d1 = _SHARED_DISTRACTORS[rng.integers(len(_SHARED_DISTRACTORS))]
    d2 = _SHARED_DISTRACTORS[rng.integers(len(_SHARED_DISTRACTORS))]
    extra = spec["extras"][rng.integers(len(spec["extras"]))]
    title = template.format(fam=fam, formula=formula, d1=d1, d2=d2)
    return f"{title} with {extra}"


def family_of_record(record_id: str) -> str:
    return record_id[0]


def family_keywords() -> list[str]:
    return [_FAMILIES[f]["keyword"] for f in sorted(_FAMILIES)]


def synth_toy_corpus(out_dir, seed: int = 0, n_per_class: int = 50) -> list[CorpusRecord]:
    """Write a 4-family synthetic corpus: CIFs, titles, keywords, and splits.

    The families have distinct geometric signatures (small-cell metals,
    rocksalt binaries, large sparse frameworks, layered cells) and titles
    drawn from family vocabulary pools plus shared distractors. Everything
    is a pure function of the seed.
    """
    out_dir = Path(out_dir)
    cif_dir = out_dir / "cifs"
    cif_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    records: list[CorpusRecord] = []
    for family in sorted(_FAMILIES):
        spec = _FAMILIES[family]
        for k in range(n_per_class):
            record_id = f"{family}{k + 1:04d}"
            structure = _family_structure(family, record_id, rng)
            formula = _formula(structure)
            title = _family_title(family, formula, rng)
            cif_path = cif_dir / f"{record_id}.cif"
            cif_path.write_text(cifio.write_cif(structure), encoding="utf-8")
            keywords = list(spec["keywords"])
            rng.shuffle(keywords)
            records.append(
                CorpusRecord(
                    id=record_id,
                    # relative to the corpus file, so the corpus is relocatable
                    # and byte-identical regardless of where it was generated
                    cif_path=f"cifs/{record_id}.cif",
                    title=title,
                    doi=f"10.0000/toy.{record_id}",
                    keywords=keywords,
                )
            )
    split(records, seed=seed)
    save_corpus(records, out_dir / "corpus.jsonl")
    for record in records:  # hand back resolvable paths
        record.cif_path = str(out_dir / record.cif_path)
    return records
