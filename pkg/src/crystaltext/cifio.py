"""CIF parsing, symmetry-operator expansion, and fractional-coordinate geometry.

Handles the COD-style subset needed to rebuild a full unit cell: the six
cell tags, the symmetry-operator loop, and the atom-site loop. All other
tags are skipped. Parsed structures carry the raw operator strings until
:func:`expand_symmetry` turns the asymmetric unit into the P1 setting.
"""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import (
    MalformedLoop,
    MissingTag,
    ParseError,
    TooManySites,
    UnknownElement,
)

logger = logging.getLogger(__name__)

ELEMENTS = (
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne",
    "Na", "Mg", "Al", "Si", "P", "S", "Cl", "Ar", "K", "Ca",
    "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn",
    "Ga", "Ge", "As", "Se", "Br", "Kr", "Rb", "Sr", "Y", "Zr",
    "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In", "Sn",
    "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd",
    "Pm", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb",
    "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir", "Pt", "Au", "Hg",
    "Tl", "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th",
    "Pa", "U", "Np", "Pu", "Am", "Cm", "Bk", "Cf", "Es", "Fm",
    "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs", "Mt", "Ds",
    "Rg", "Cn", "Nh", "Fl", "Mc", "Lv", "Ts", "Og",
)
_ELEMENT_INDEX = {sym: i for i, sym in enumerate(ELEMENTS)}

#: Number of atoms above which a structure is rejected from the corpus.
MAX_SITES = 500

#: Fractional-coordinate tolerance for treating two sites as coincident.
DEDUP_TOL = 1e-3

_SYMMETRY_TAGS = ("_symmetry_equiv_pos_as_xyz", "_space_group_symop_operation_xyz")
_CELL_TAGS = (
    "_cell_length_a", "_cell_length_b", "_cell_length_c",
    "_cell_angle_alpha", "_cell_angle_beta", "_cell_angle_gamma",
)


def atomic_number(symbol: str) -> int:
    """1-based atomic number of an element symbol."""
    try:
        return _ELEMENT_INDEX[symbol] + 1
    except KeyError:
        raise UnknownElement(f"unknown element symbol {symbol!r}") from None


@dataclass(frozen=True)
class LatticeParams:
    """Cell lengths in Angstrom and angles in degrees."""

    a: float
    b: float
    c: float
    alpha: float
    beta: float
    gamma: float

    def __post_init__(self):
        for name in ("a", "b", "c"):
            if not getattr(self, name) > 0:
                raise ValueError(f"cell length {name} must be positive")
        for name in ("alpha", "beta", "gamma"):
            ang = getattr(self, name)
            if not 0.0 < ang < 180.0:
                raise ValueError(f"cell angle {name} must lie in (0, 180)")
        if not cell_volume(self) > 0:
            raise ValueError("cell volume is not positive")


@dataclass(frozen=True)
class AtomSite:
    element: str
    frac: tuple[float, float, float]

    def __post_init__(self):
        if self.element not in _ELEMENT_INDEX:
            raise UnknownElement(f"unknown element symbol {self.element!r}")
        object.__setattr__(self, "frac", tuple(float(x) % 1.0 for x in self.frac))


def _det3(rot) -> int:
    return (
        rot[0][0] * (rot[1][1] * rot[2][2] - rot[1][2] * rot[2][1])
        - rot[0][1] * (rot[1][0] * rot[2][2] - rot[1][2] * rot[2][0])
        + rot[0][2] * (rot[1][0] * rot[2][1] - rot[1][1] * rot[2][0])
    )


@dataclass(frozen=True)
class SymmetryOp:
    """Affine map on fractional coordinates: frac -> rotation @ frac + translation."""

    rotation: tuple[tuple[int, int, int], ...]
    translation: tuple[Fraction, Fraction, Fraction]

    def __post_init__(self):
        rot = tuple(tuple(int(v) for v in row) for row in self.rotation)
        if len(rot) != 3 or any(len(r) != 3 for r in rot):
            raise ValueError("rotation must be 3x3")
        if any(v not in (-1, 0, 1) for row in rot for v in row):
            raise ValueError("rotation entries must be in {-1, 0, 1}")
        det = _det3(rot)
        if det == 0:
            raise ValueError("rotation is singular")
        tr = tuple(Fraction(t) % 1 for t in self.translation)
        if any(t.denominator not in (1, 2, 3, 4, 6) for t in tr):
            raise ValueError("translation denominators must be in {1,2,3,4,6}")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", tr)

    def apply(self, frac) -> tuple[float, float, float]:
        x, y, z = frac
        out = []
        for row, t in zip(self.rotation, self.translation):
            out.append((row[0] * x + row[1] * y + row[2] * z + float(t)) % 1.0)
        return tuple(out)


IDENTITY_OP = SymmetryOp(
    rotation=((1, 0, 0), (0, 1, 0), (0, 0, 1)),
    translation=(Fraction(0), Fraction(0), Fraction(0)),
)


@dataclass
class CrystalStructure:
    """A unit cell: lattice plus atomic sites in fractional coordinates.

    Fresh from :func:`parse_cif` the sites are the asymmetric unit and
    ``symmetry_xyz`` holds the raw operator strings; after
    :func:`expand_symmetry` the sites are the full P1 cell.
    """

    id: str
    lattice: LatticeParams
    sites: list[AtomSite]
    symmetry_xyz: list[str] = field(default_factory=list)

    @property
    def n_sites(self) -> int:
        return len(self.sites)


# ---------------------------------------------------------------------------
# symmetry-operator strings
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(r"(\d+/\d+|\d+\.\d+|\.\d+|\d+|[xyzXYZ]|[+\-,])")
_AXES = {"x": 0, "y": 1, "z": 2}


def _tokenize_op(s: str):
    """Yield (token, byte offset) pairs; raise ParseError on anything else."""
    pos = 0
    n = len(s)
    while pos < n:
        if s[pos].isspace():
            pos += 1
            continue
        m = _TOKEN_RE.match(s, pos)
        if m is None:
            raise ParseError(f"unrecognized token {s[pos]!r} in symmetry op", offset=pos)
        yield m.group(0), pos
        pos = m.end()


def parse_symmetry_op(s: str) -> SymmetryOp:
    """Parse an operator string like ``-x, y+1/2, -z``."""
    components: list[list[tuple[str, int]]] = [[]]
    for tok, pos in _tokenize_op(s):
        if tok == ",":
            components.append([])
        else:
            components[-1].append((tok, pos))
    if len(components) != 3:
        raise ParseError(f"expected 3 comma-separated components, got {len(components)}", offset=0)

    rotation = []
    translation = []
    for comp in components:
        row = [0, 0, 0]
        trans = Fraction(0)
        sign = 1
        pending_sign = False
        for tok, pos in comp:
            if tok == "+":
                sign = 1 if not pending_sign else sign
                pending_sign = True
            elif tok == "-":
                sign = -sign if pending_sign else -1
                pending_sign = True
            elif tok.lower() in _AXES:
                row[_AXES[tok.lower()]] += sign
                sign, pending_sign = 1, False
            else:
                trans += sign * _parse_rational(tok, pos)
                sign, pending_sign = 1, False
        if pending_sign:
            raise ParseError("dangling sign in symmetry op", offset=comp[-1][1])
        if not any(row):
            raise ParseError("component has no x/y/z term", offset=comp[0][1] if comp else 0)
        rotation.append(tuple(row))
        translation.append(trans % 1)
    return SymmetryOp(rotation=tuple(rotation), translation=tuple(translation))


def _parse_rational(tok: str, pos: int) -> Fraction:
    if "/" in tok:
        num, den = tok.split("/")
        return Fraction(int(num), int(den))
    value = float(tok)
    frac = Fraction(value).limit_denominator(6)
    if abs(float(frac) - value) > 1e-6:
        raise ParseError(f"constant {tok!r} is not a rational with denominator <= 6", offset=pos)
    return frac


def format_symmetry_op(op: SymmetryOp) -> str:
    """Canonical string form; ``parse_symmetry_op(format_symmetry_op(op)) == op``."""
    parts = []
    for row, t in zip(op.rotation, op.translation):
        terms = ""
        for coeff, axis in zip(row, "xyz"):
            if coeff == 0:
                continue
            sign = "-" if coeff < 0 else ("+" if terms else "")
            terms += f"{sign}{axis}"
        if t != 0:
            terms += f"+{t.numerator}/{t.denominator}" if t.denominator != 1 else f"+{t.numerator}"
        parts.append(terms)
    return ", ".join(parts)


def expand_symmetry(structure: CrystalStructure, ops: list[SymmetryOp]) -> CrystalStructure:
    """Apply the operator closure to the sites, deduplicate, and sort.

    Duplicates are removed at ``DEDUP_TOL`` fractional tolerance with periodic
    wrapping. Raises TooManySites when the expansion exceeds ``MAX_SITES``.
    """
    if not any(op == IDENTITY_OP for op in ops):
        raise ValueError("operator list must contain the identity")
    sites: list[AtomSite] = []
    for site in structure.sites:
        _add_unique(sites, site)
    # iterate to a fixed point so partial operator lists still close
    frontier = list(sites)
    while frontier:
        new_sites: list[AtomSite] = []
        for op in ops:
            for site in frontier:
                candidate = AtomSite(element=site.element, frac=op.apply(site.frac))
                if _add_unique(sites, candidate):
                    new_sites.append(candidate)
            if len(sites) > MAX_SITES:
                raise TooManySites(
                    f"symmetry expansion of {structure.id!r} exceeds {MAX_SITES} sites"
                )
        frontier = new_sites
    ordered = sorted(sites, key=lambda s: (s.element, s.frac))
    return CrystalStructure(
        id=structure.id, lattice=structure.lattice, sites=ordered, symmetry_xyz=[]
    )


def _wrapped_close(a: AtomSite, b: AtomSite, tol: float = DEDUP_TOL) -> bool:
    if a.element != b.element:
        return False
    for u, v in zip(a.frac, b.frac):
        d = abs(u - v)
        if min(d, 1.0 - d) > tol:
            return False
    return True


def _add_unique(sites: list[AtomSite], candidate: AtomSite) -> bool:
    for existing in sites:
        if _wrapped_close(existing, candidate):
            return False
    sites.append(candidate)
    return True


# ---------------------------------------------------------------------------
# cell geometry
# ---------------------------------------------------------------------------

def lattice_matrix(lattice: LatticeParams) -> np.ndarray:
    """Row-vector cell matrix: row k is lattice vector a_k in Cartesian Angstrom.

    Convention: a along x, b in the x-y plane, so the matrix is lower
    triangular and cart = frac @ M.
    """
    alpha = math.radians(lattice.alpha)
    beta = math.radians(lattice.beta)
    gamma = math.radians(lattice.gamma)
    ca, cb, cg = math.cos(alpha), math.cos(beta), math.cos(gamma)
    sg = math.sin(gamma)
    v = math.sqrt(max(0.0, 1.0 - ca * ca - cb * cb - cg * cg + 2.0 * ca * cb * cg))
    return np.array(
        [
            [lattice.a, 0.0, 0.0],
            [lattice.b * cg, lattice.b * sg, 0.0],
            [lattice.c * cb, lattice.c * (ca - cb * cg) / sg, lattice.c * v / sg],
        ],
        dtype=np.float64,
    )


def frac_to_cart(lattice: LatticeParams, frac) -> np.ndarray:
    """Cartesian coordinates (Angstrom) of a fractional position."""
    return np.asarray(frac, dtype=np.float64) @ lattice_matrix(lattice)


def cell_volume(lattice: LatticeParams) -> float:
    alpha = math.radians(lattice.alpha)
    beta = math.radians(lattice.beta)
    gamma = math.radians(lattice.gamma)
    ca, cb, cg = math.cos(alpha), math.cos(beta), math.cos(gamma)
    arg = 1.0 - ca * ca - cb * cb - cg * cg + 2.0 * ca * cb * cg
    if arg <= 0:
        return 0.0
    return lattice.a * lattice.b * lattice.c * math.sqrt(arg)


# ---------------------------------------------------------------------------
# CIF document parsing
# ---------------------------------------------------------------------------

_UNCERTAINTY_RE = re.compile(r"^([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)(?:\(\d+\))?$")


def parse_numeric(token: str) -> float:
    """Parse a CIF numeric token, stripping a parenthesized uncertainty."""
    m = _UNCERTAINTY_RE.match(token)
    if m is None:
        raise ParseError(f"not a numeric CIF value: {token!r}")
    return float(m.group(1))


def _split_cif_line(line: str) -> list[str]:
    """Whitespace tokenization honoring single/double quotes."""
    tokens = []
    i, n = 0, len(line)
    while i < n:
        ch = line[i]
        if ch.isspace():
            i += 1
            continue
        if ch == "#":
            break
        if ch in "'\"":
            end = line.find(ch, i + 1)
            if end == -1:
                tokens.append(line[i + 1:])
                i = n
            else:
                tokens.append(line[i + 1:end])
                i = end + 1
        else:
            j = i
            while j < n and not line[j].isspace():
                j += 1
            tokens.append(line[i:j])
            i = j
    return tokens


def _element_from_label(label: str) -> str:
    m = re.match(r"([A-Za-z]{1,2})", label)
    if m is None:
        raise UnknownElement(f"cannot derive an element from {label!r}")
    raw = m.group(1)
    two = raw[:1].upper() + raw[1:].lower()
    if len(two) == 2 and two in _ELEMENT_INDEX:
        return two
    one = raw[:1].upper()
    if one in _ELEMENT_INDEX:
        return one
    if two in _ELEMENT_INDEX:
        return two
    raise UnknownElement(f"unknown element symbol {raw!r}")


def parse_cif(text: str) -> CrystalStructure:
    """Parse a CIF document into a pre-expansion structure.

    The returned structure holds the asymmetric-unit sites and the raw
    symmetry operator strings; pass it through :func:`expand_symmetry` (or
    :func:`load_structure`) to obtain the full cell.
    """
    lines = text.splitlines()
    block_id = "structure"
    cell: dict[str, float] = {}
    symmetry_xyz: list[str] = []
    sites: list[AtomSite] = []

    i = 0
    n = len(lines)
    while i < n:
        line = lines[i].strip()
        if not line or line.startswith("#"):
            i += 1
            continue
        if line.startswith("data_"):
            block_id = line[len("data_"):].strip() or block_id
            i += 1
            continue
        if line.lower() == "loop_":
            i = _parse_loop(lines, i + 1, symmetry_xyz, sites)
            continue
        if line.startswith("_"):
            tokens = _split_cif_line(line)
            tag = tokens[0].lower()
            if tag in _CELL_TAGS and len(tokens) >= 2:
                cell[tag] = parse_numeric(tokens[1])
            i += 1
            continue
        i += 1

    for tag in _CELL_TAGS:
        if tag not in cell:
            raise MissingTag(f"required cell tag {tag} is absent")
    lattice = LatticeParams(
        a=cell["_cell_length_a"],
        b=cell["_cell_length_b"],
        c=cell["_cell_length_c"],
        alpha=cell["_cell_angle_alpha"],
        beta=cell["_cell_angle_beta"],
        gamma=cell["_cell_angle_gamma"],
    )
    if not sites:
        raise MissingTag("no atom-site loop with fractional coordinates found")
    return CrystalStructure(id=block_id, lattice=lattice, sites=sites, symmetry_xyz=symmetry_xyz)


def _parse_loop(lines: list[str], start: int, symmetry_xyz: list[str], sites: list[AtomSite]) -> int:
    """Parse one loop_ block starting at the header lines; return the next index."""
    headers: list[str] = []
    i = start
    n = len(lines)
    while i < n:
        stripped = lines[i].strip()
        if stripped.startswith("_"):
            headers.append(_split_cif_line(stripped)[0].lower())
            i += 1
        else:
            break

    is_symmetry = any(h in _SYMMETRY_TAGS for h in headers)
    # the coordinate loop specifically; _atom_site_aniso_* and friends skip
    is_atoms = "_atom_site_fract_x" in headers

    rows: list[list[str]] = []
    while i < n:
        stripped = lines[i].strip()
        if not stripped or stripped.startswith("#"):
            i += 1
            if not stripped:
                break
            continue
        if stripped.startswith("_") or stripped.lower().startswith(("loop_", "data_")):
            break
        tokens = _split_cif_line(stripped)
        if tokens:
            if (is_symmetry or is_atoms) and len(tokens) != len(headers):
                raise MalformedLoop(
                    f"loop row has {len(tokens)} columns under {len(headers)} declared headers: {stripped!r}"
                )
            rows.append(tokens)
        i += 1

    if is_symmetry:
        col = next(idx for idx, h in enumerate(headers) if h in _SYMMETRY_TAGS)
        for row in rows:
            symmetry_xyz.append(row[col])
    elif is_atoms:
        _parse_atom_rows(headers, rows, sites)
    return i


def _parse_atom_rows(headers: list[str], rows: list[list[str]], sites: list[AtomSite]) -> None:
    def col(tag: str):
        try:
            return headers.index(tag)
        except ValueError:
            return None

    label_col = col("_atom_site_label")
    symbol_col = col("_atom_site_type_symbol")
    x_col = col("_atom_site_fract_x")
    y_col = col("_atom_site_fract_y")
    z_col = col("_atom_site_fract_z")
    occ_col = col("_atom_site_occupancy")
    if y_col is None or z_col is None:
        raise MissingTag("atom-site loop lacks _atom_site_fract_y/z columns")
    if label_col is None and symbol_col is None:
        raise MissingTag("atom-site loop lacks a label or type_symbol column")

    for row in rows:
        if symbol_col is not None:
            element = _element_from_label(row[symbol_col])
        else:
            element = _element_from_label(row[label_col])
        try:
            frac = (
                parse_numeric(row[x_col]),
                parse_numeric(row[y_col]),
                parse_numeric(row[z_col]),
            )
        except ParseError as exc:
            raise MalformedLoop(f"bad fractional coordinate in row {row!r}: {exc}") from exc
        if occ_col is not None:
            parse_numeric(row[occ_col])  # read for validity; not used downstream
        sites.append(AtomSite(element=element, frac=frac))


def load_structure(text: str) -> CrystalStructure:
    """Parse a CIF and expand its symmetry operators into the full cell."""
    structure = parse_cif(text)
    if structure.symmetry_xyz:
        ops = [parse_symmetry_op(s) for s in structure.symmetry_xyz]
        if not any(op == IDENTITY_OP for op in ops):
            ops.insert(0, IDENTITY_OP)
    else:
        ops = [IDENTITY_OP]
    return expand_symmetry(structure, ops)


# ---------------------------------------------------------------------------
# canonical JSON dump
# ---------------------------------------------------------------------------

def structure_to_json(structure: CrystalStructure) -> str:
    doc = {
        "id": structure.id,
        "lattice": {
            "a": structure.lattice.a,
            "b": structure.lattice.b,
            "c": structure.lattice.c,
            "alpha": structure.lattice.alpha,
            "beta": structure.lattice.beta,
            "gamma": structure.lattice.gamma,
        },
        "sites": [{"element": s.element, "frac": list(s.frac)} for s in structure.sites],
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def structure_from_json(doc: str | dict) -> CrystalStructure:
    if isinstance(doc, str):
        doc = json.loads(doc)
    lattice = LatticeParams(**doc["lattice"])
    sites = [AtomSite(element=s["element"], frac=tuple(s["frac"])) for s in doc["sites"]]
    return CrystalStructure(id=doc["id"], lattice=lattice, sites=sites)


def write_cif(structure: CrystalStructure) -> str:
    """Render a structure as a minimal P1 CIF (used by the synthetic corpus)."""
    lines = [
        f"data_{structure.id}",
        f"_cell_length_a {structure.lattice.a:.6f}",
        f"_cell_length_b {structure.lattice.b:.6f}",
        f"_cell_length_c {structure.lattice.c:.6f}",
        f"_cell_angle_alpha {structure.lattice.alpha:.6f}",
        f"_cell_angle_beta {structure.lattice.beta:.6f}",
        f"_cell_angle_gamma {structure.lattice.gamma:.6f}",
        "loop_",
        "_symmetry_equiv_pos_as_xyz",
        "'x, y, z'",
        "loop_",
        "_atom_site_label",
        "_atom_site_type_symbol",
        "_atom_site_fract_x",
        "_atom_site_fract_y",
        "_atom_site_fract_z",
    ]
    for k, site in enumerate(structure.sites):
        x, y, z = site.frac
        lines.append(f"{site.element}{k + 1} {site.element} {x:.6f} {y:.6f} {z:.6f}")
    return "\n".join(lines) + "\n"
