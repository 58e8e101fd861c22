"""Immutable structure model: sites, symmetry metadata, composition, supercells."""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import reduce

import numpy as np

from philately.elements import formula_sort_key, is_element
from philately.crystal.lattice import CrystalError, Lattice, wrap_frac


@dataclass(frozen=True)
class Site:
    species: str
    frac: tuple[float, float, float]
    occupancy: float = 1.0

    def __post_init__(self) -> None:
        if not is_element(self.species):
            raise CrystalError(f"unknown element {self.species!r}")
        if not (0.0 < self.occupancy <= 1.0):
            raise CrystalError(f"occupancy {self.occupancy} outside (0, 1]")
        w = wrap_frac(np.asarray(self.frac, dtype=float).reshape(3))
        object.__setattr__(self, "frac", (float(w[0]), float(w[1]), float(w[2])))


@dataclass(frozen=True)
class SymmetryMeta:
    """Symmetry information declared by the source file; never detected."""

    space_group_symbol: str | None = None
    space_group_number: int | None = None
    wyckoff: tuple[str, ...] | None = None


@dataclass(frozen=True)
class Structure:
    lattice: Lattice
    sites: tuple[Site, ...]
    symmetry: SymmetryMeta | None = None
    source: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "sites", tuple(self.sites))
        if not self.sites:
            raise CrystalError("structure needs at least one site")
        if self.symmetry is not None and self.symmetry.wyckoff is not None:
            if len(self.symmetry.wyckoff) != len(self.sites):
                raise CrystalError("per-site Wyckoff letters do not match site count")

    @classmethod
    def from_arrays(cls, lattice, species, frac, occupancies=None, **kwargs) -> "Structure":
        if not isinstance(lattice, Lattice):
            lattice = Lattice(lattice)
        frac = np.asarray(frac, dtype=float).reshape(-1, 3)
        if occupancies is None:
            occupancies = [1.0] * len(species)
        sites = tuple(Site(sp, tuple(f), float(o)) for sp, f, o in zip(species, frac, occupancies, strict=True))
        return cls(lattice, sites, **kwargs)

    def __len__(self) -> int:
        return len(self.sites)

    @property
    def species(self) -> list[str]:
        return [s.species for s in self.sites]

    @property
    def frac_coords(self) -> np.ndarray:
        return np.array([s.frac for s in self.sites], dtype=float)

    @property
    def cart_coords(self) -> np.ndarray:
        return self.lattice.frac_to_cart(self.frac_coords)

    @property
    def occupancies(self) -> np.ndarray:
        return np.array([s.occupancy for s in self.sites])

    @property
    def volume(self) -> float:
        return self.lattice.volume

    @property
    def elements(self) -> list[str]:
        return sorted(set(self.species))

    def with_frac_coords(self, frac) -> "Structure":
        frac = np.asarray(frac, dtype=float).reshape(len(self.sites), 3)
        sites = tuple(Site(s.species, tuple(f), s.occupancy) for s, f in zip(self.sites, frac))
        return replace(self, sites=sites)

    def with_cart_coords(self, cart) -> "Structure":
        return self.with_frac_coords(self.lattice.cart_to_frac(cart))

    def translated(self, shift_frac) -> "Structure":
        return self.with_frac_coords(self.frac_coords + np.asarray(shift_frac, dtype=float))

    def composition(self) -> "Composition":
        amounts: dict[str, float] = {}
        for s in self.sites:
            amounts[s.species] = amounts.get(s.species, 0.0) + s.occupancy
        return Composition(amounts)


def composition(structure: Structure) -> "Composition":
    return structure.composition()


def _format_amount(x: float) -> str:
    if abs(x - 1.0) < 1e-8:
        return ""
    if abs(x - round(x)) < 1e-8:
        return str(int(round(x)))
    text = f"{x:.8f}".rstrip("0").rstrip(".")
    return text


@dataclass(frozen=True)
class Composition:
    amounts: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        clean = {}
        for el, amt in self.amounts.items():
            amt = float(amt)
            if amt < 0 or not math.isfinite(amt):
                raise CrystalError(f"invalid amount {amt} for {el}")
            if amt > 0:
                clean[el] = amt
        if not clean:
            raise CrystalError("composition is empty")
        object.__setattr__(self, "amounts", clean)

    def __hash__(self) -> int:
        return hash(tuple(sorted(self.amounts.items())))

    @property
    def elements(self) -> list[str]:
        return sorted(self.amounts)

    def total(self) -> float:
        return math.fsum(self.amounts.values())

    def fractions(self) -> dict[str, float]:
        tot = self.total()
        fr = {el: a / tot for el, a in self.amounts.items()}
        return fr

    def formula(self) -> str:
        """Unreduced formula in electronegativity order."""
        ordered = sorted(self.amounts, key=formula_sort_key)
        return "".join(f"{el}{_format_amount(self.amounts[el])}" for el in ordered)

    def reduced_amounts(self) -> dict[str, float]:
        vals = list(self.amounts.values())
        if all(abs(v - round(v)) < 1e-8 for v in vals):
            g = reduce(math.gcd, (int(round(v)) for v in vals))
            return {el: float(round(a) // g) for el, a in self.amounts.items()}
        return dict(self.amounts)

    def reduced_formula(self) -> str:
        red = self.reduced_amounts()
        ordered = sorted(red, key=formula_sort_key)
        return "".join(f"{el}{_format_amount(red[el])}" for el in ordered)


def reduced_formula(c: Composition) -> str:
    return c.reduced_formula()


def composition_from_fractions(fractions: dict[str, float], max_denominator: int = 1000) -> Composition:
    """Recover small integer amounts from atomic fractions when they are rational."""
    fr = {el: Fraction(v).limit_denominator(max_denominator) for el, v in fractions.items() if v > 0}
    if all(abs(float(fr[el]) - fractions[el]) < 1e-12 for el in fr):
        lcm = reduce(lambda a, b: a * b // math.gcd(a, b), (f.denominator for f in fr.values()), 1)
        return Composition({el: float(f * lcm) for el, f in fr.items()})
    return Composition({el: v for el, v in fractions.items() if v > 0})


def make_supercell(structure: Structure, scaling) -> Structure:
    """Supercell with lattice ``scaling @ lattice.matrix`` for an integer matrix (or 3 ints)."""
    s = np.asarray(scaling, dtype=np.int64)
    if s.ndim == 1:
        s = np.diag(s)
    det = int(round(np.linalg.det(s)))
    if det <= 0:
        raise CrystalError("supercell matrix must have positive determinant")
    new_lattice = structure.lattice.transformed(s)
    inv = np.linalg.inv(s.astype(float))
    # lattice points of the old lattice inside the new cell, in new fractional units
    corners = np.array(list(itertools.product((0, 1), repeat=3))) @ s
    lo, hi = corners.min(axis=0), corners.max(axis=0)
    grid = np.array(list(itertools.product(*(range(l, h + 1) for l, h in zip(lo, hi)))), dtype=float)
    gfrac = grid @ inv
    inside = np.all((gfrac > -1e-9) & (gfrac < 1 - 1e-9), axis=1)
    points = grid[inside]
    if len(points) != det:
        raise CrystalError("supercell enumeration mismatch")
    sites: list[Site] = []
    wyck: list[str] = []
    meta = structure.symmetry
    for idx, site in enumerate(structure.sites):
        f = np.asarray(site.frac)
        for pt in points:
            nf = (f + pt) @ inv
            sites.append(Site(site.species, tuple(nf), site.occupancy))
            if meta is not None and meta.wyckoff is not None:
                wyck.append(meta.wyckoff[idx])
    if meta is not None and meta.wyckoff is not None:
        meta = replace(meta, wyckoff=tuple(wyck))
    return Structure(new_lattice, tuple(sites), meta, structure.source)


_FORMULA_TOKEN = re.compile(r"([A-Z][a-z]?)((?:\d+(?:\.\d*)?|\.\d+)?)")


def parse_formula(formula: str) -> Composition:
    """Parse a flat formula such as "Fe2O3" or "Na0.5Cl" (no brackets)."""
    text = formula.replace(" ", "")
    amounts: dict[str, float] = {}
    pos = 0
    for m in _FORMULA_TOKEN.finditer(text):
        if m.start() != pos:
            break
        amounts[m.group(1)] = amounts.get(m.group(1), 0.0) + (float(m.group(2)) if m.group(2) else 1.0)
        pos = m.end()
    if pos != len(text) or not amounts:
        raise ValueError(f"malformed formula {formula!r}")
    unknown = [el for el in amounts if not is_element(el)]
    if unknown:
        raise ValueError(f"unknown element {unknown[0]!r} in formula {formula!r}")
    return Composition(amounts)
