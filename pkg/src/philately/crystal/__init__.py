"""Crystal structure model and geometry."""

from philately.crystal.lattice import CrystalError, Lattice, NonConvergence, lll_reduce, niggli_reduce, wrap_frac
from philately.crystal.neighbors import CellTooSkewed, PairList, min_interatomic_distance, neighbor_pairs
from philately.crystal.primitive import find_primitive, primitive_with_transform
from philately.crystal.structure import (
    Composition,
    Site,
    Structure,
    SymmetryMeta,
    composition,
    composition_from_fractions,
    make_supercell,
    parse_formula,
    reduced_formula,
)
from philately.crystal.validity import CheckResult, ValidityCriteria, ValidityReport, validate_structure


def frac_to_cart(lattice: Lattice, frac):
    return lattice.frac_to_cart(frac)


def cart_to_frac(lattice: Lattice, cart):
    return lattice.cart_to_frac(cart)


__all__ = [
    "CellTooSkewed", "CheckResult", "Composition", "CrystalError", "Lattice", "NonConvergence",
    "PairList", "Site", "Structure", "SymmetryMeta", "ValidityCriteria", "ValidityReport",
    "cart_to_frac", "composition", "composition_from_fractions", "find_primitive", "frac_to_cart",
    "lll_reduce", "make_supercell", "min_interatomic_distance", "neighbor_pairs", "niggli_reduce",
    "parse_formula", "primitive_with_transform", "reduced_formula", "validate_structure", "wrap_frac",
]
