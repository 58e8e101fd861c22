"""Structure extraction from a CIF block (asymmetric-unit expansion) and CIF export."""

from __future__ import annotations

from collections.abc import Iterable

import numpy as np

from philately.cif.document import CifBlock, is_missing, parse_number
from philately.cif.errors import BadNumber, CifError, MissingTag, OccupancyError, UnknownElement
from philately.cif.symops import SymOp, parse_symop
from philately.crystal.lattice import CrystalError, Lattice, wrap_frac
from philately.crystal.structure import Site, Structure, SymmetryMeta
from philately.elements import normalize_symbol

CELL_TAGS = (
    "_cell_length_a", "_cell_length_b", "_cell_length_c",
    "_cell_angle_alpha", "_cell_angle_beta", "_cell_angle_gamma",
)
SYMOP_TAGS = ("_symmetry_equiv_pos_as_xyz", "_space_group_symop_operation_xyz")
SG_SYMBOL_TAGS = ("_symmetry_space_group_name_h-m", "_space_group_name_h-m_alt")
SG_NUMBER_TAGS = ("_symmetry_int_tables_number", "_space_group_it_number")
DEFAULT_SITE_MERGE_TOL = 1e-3


def _number(block: CifBlock, tag: str) -> float:
    if tag not in block.items:
        raise MissingTag(tag)
    value = block.items[tag]
    if is_missing(value):
        raise MissingTag(tag)
    try:
        return parse_number(value)
    except BadNumber as exc:
        raise BadNumber(f"{tag}: {exc}") from None


def symmetry_operations(block: CifBlock) -> list[SymOp]:
    for tag in SYMOP_TAGS:
        values = block.values(tag)
        if values:
            return [parse_symop(v) for v in values]
    return [SymOp.identity()]


def _space_group(block: CifBlock) -> tuple[str | None, int | None]:
    symbol = None
    for tag in SG_SYMBOL_TAGS:
        v = block.items.get(tag)
        if v is not None and not is_missing(v):
            symbol = v.strip()
            break
    number = None
    for tag in SG_NUMBER_TAGS:
        v = block.items.get(tag)
        if v is not None and not is_missing(v):
            try:
                number = int(parse_number(v))
            except BadNumber:
                raise BadNumber(f"{tag}: not a space-group number: {v!r}") from None
            break
    return symbol, number


def extract_structure(block: CifBlock, site_merge_tol: float = DEFAULT_SITE_MERGE_TOL, source: str = "") -> Structure:
    """Full unit cell from a CIF block: cell, atom sites, and symmetry expansion."""
    params = [_number(block, t) for t in CELL_TAGS]
    try:
        lattice = Lattice.from_parameters(*params)
    except CrystalError as exc:
        raise CifError(f"invalid cell: {exc}") from None

    loop = block.find_loop("_atom_site_fract_x")
    if loop is None:
        raise MissingTag("_atom_site_fract_x")
    for tag in ("_atom_site_fract_y", "_atom_site_fract_z"):
        if tag not in loop.tags:
            raise MissingTag(tag)
    if "_atom_site_type_symbol" in loop.tags:
        raw_species = loop.column("_atom_site_type_symbol")
    elif "_atom_site_label" in loop.tags:
        raw_species = loop.column("_atom_site_label")
    else:
        raise MissingTag("_atom_site_type_symbol")
    species = []
    for raw in raw_species:
        try:
            species.append(normalize_symbol(raw))
        except ValueError as exc:
            raise UnknownElement(str(exc)) from None

    def coords(tag: str) -> list[float]:
        out = []
        for v in loop.column(tag):
            if is_missing(v):
                raise BadNumber(f"{tag}: missing coordinate")
            out.append(parse_number(v))
        return out

    frac = np.column_stack([coords(t) for t in ("_atom_site_fract_x", "_atom_site_fract_y", "_atom_site_fract_z")])
    if not np.all(np.isfinite(frac)):
        raise BadNumber("non-finite fractional coordinate")
    occ = [1.0] * len(species)
    if "_atom_site_occupancy" in loop.tags:
        occ = [1.0 if is_missing(v) else parse_number(v) for v in loop.column("_atom_site_occupancy")]
    for label, o in zip(raw_species, occ):
        if not (0.0 < o <= 1.0):
            raise OccupancyError(f"site {label}: occupancy {o} outside (0, 1]")
    wyck_col = loop.column("_atom_site_wyckoff_symbol") if "_atom_site_wyckoff_symbol" in loop.tags else None

    ops = symmetry_operations(block)
    rot = np.array([op.rotation_matrix for op in ops])
    trans = np.array([op.translation_vector for op in ops])

    kept_frac: list[np.ndarray] = []
    kept_species: list[str] = []
    kept_occ: list[float] = []
    kept_wyck: list[str] = []
    metric = lattice.matrix
    for idx, (sp, f) in enumerate(zip(species, frac)):
        images = wrap_frac(np.einsum("kij,j->ki", rot, f) + trans)
        same = [k for k, s in enumerate(kept_species) if s == sp]
        pool = [kept_frac[k] for k in same]
        for img in images:
            if pool:
                d = np.asarray(pool) - img
                d -= np.round(d)
                if np.min(np.linalg.norm(d @ metric, axis=1)) < site_merge_tol:
                    continue
            pool.append(img)
            kept_frac.append(img)
            kept_species.append(sp)
            kept_occ.append(occ[idx])
            if wyck_col is not None:
                kept_wyck.append(wyck_col[idx])

    symbol, number = _space_group(block)
    meta = None
    if symbol is not None or number is not None or wyck_col is not None:
        meta = SymmetryMeta(symbol, number, tuple(kept_wyck) if wyck_col is not None else None)
    sites = tuple(Site(s, tuple(f), o) for s, f, o in zip(kept_species, kept_frac, kept_occ))
    return Structure(lattice, sites, meta, source)


def _label(text: str) -> str:
    clean = "".join(ch if (ch.isalnum() or ch in "-_.") else "_" for ch in text.strip())
    return clean or "structure"


def emit_cif(structure: Structure, label: str = "structure") -> str:
    """Deterministic P1 CIF text for a structure."""
    a, b, c, al, be, ga = structure.lattice.parameters
    lines = [
        f"data_{_label(label)}",
        "_symmetry_space_group_name_H-M   'P 1'",
        "_symmetry_Int_Tables_number      1",
        f"_cell_length_a    {a:.12f}",
        f"_cell_length_b    {b:.12f}",
        f"_cell_length_c    {c:.12f}",
        f"_cell_angle_alpha {al:.12f}",
        f"_cell_angle_beta  {be:.12f}",
        f"_cell_angle_gamma {ga:.12f}",
        f"_cell_volume      {structure.volume:.12f}",
        "loop_",
        "_symmetry_equiv_pos_as_xyz",
        "'x, y, z'",
        "loop_",
        "_atom_site_label",
        "_atom_site_type_symbol",
        "_atom_site_fract_x",
        "_atom_site_fract_y",
        "_atom_site_fract_z",
        "_atom_site_occupancy",
    ]
    counters: dict[str, int] = {}
    for site in structure.sites:
        counters[site.species] = counters.get(site.species, 0) + 1
        x, y, z = site.frac
        lines.append(
            f"{site.species}{counters[site.species]} {site.species} "
            f"{x:.12f} {y:.12f} {z:.12f} {site.occupancy:.12f}"
        )
    return "\n".join(lines) + "\n"


def emit_cif_blocks(structures: Iterable[Structure], prefix: str = "frame") -> str:
    """Multi-block CIF, one block per structure (e.g. a relaxation trajectory)."""
    return "".join(emit_cif(s, f"{prefix}_{i:05d}") for i, s in enumerate(structures))
