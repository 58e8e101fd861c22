"""Shifted periodic Lennard-Jones potential with Lorentz-Berthelot mixing."""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from philately.calculator.base import CalcResult, Calculator, Overlap, UnknownElement
from philately.crystal.neighbors import neighbor_pairs
from philately.crystal.structure import Structure

# (epsilon eV, sigma Angstrom); noble gases only, not a general-purpose table
DEFAULT_LJ_TABLE: dict[str, tuple[float, float]] = {
    "He": (0.00088, 2.56),
    "Ne": (0.00312, 2.74),
    "Ar": (0.0104, 3.40),
    "Kr": (0.0140, 3.65),
    "Xe": (0.0200, 4.10),
}
OVERLAP_DISTANCE = 1e-6


@dataclass(frozen=True)
class LjParams:
    species: Mapping[str, tuple[float, float]] = field(default_factory=lambda: dict(DEFAULT_LJ_TABLE))
    cutoff: float = 10.0

    def __post_init__(self) -> None:
        if not self.species:
            raise ValueError("LJ parameter table is empty")
        for el, (eps, sigma) in self.species.items():
            if eps <= 0 or sigma <= 0:
                raise ValueError(f"LJ parameters for {el} must be positive")
        max_sigma = max(s for _, s in self.species.values())
        if self.cutoff < 2 * max_sigma:
            raise ValueError(f"cutoff {self.cutoff} below 2*max(sigma) = {2 * max_sigma}")

    def pair(self, a: str, b: str) -> tuple[float, float]:
        ea, sa = self.species[a]
        eb, sb = self.species[b]
        return float(np.sqrt(ea * eb)), 0.5 * (sa + sb)


def lj_evaluate(structure: Structure, params: LjParams) -> CalcResult:
    species = structure.species
    missing = sorted(set(species) - set(params.species))
    if missing:
        raise UnknownElement(f"no LJ parameters for {', '.join(missing)}")
    n = len(species)
    pairs = neighbor_pairs(structure, params.cutoff)
    forces = np.zeros((n, 3))
    if len(pairs) == 0:
        return CalcResult(0.0, forces)
    r = pairs.distances
    if np.any(r < OVERLAP_DISTANCE):
        k = int(np.argmin(r))
        raise Overlap(f"sites {pairs.i[k]} and {pairs.j[k]} overlap (r = {r[k]:.3g} A)")

    kinds = sorted(set(species))
    index = {el: k for k, el in enumerate(kinds)}
    eps_tab = np.zeros((len(kinds), len(kinds)))
    sig_tab = np.zeros_like(eps_tab)
    for a in kinds:
        for b in kinds:
            eps_tab[index[a], index[b]], sig_tab[index[a], index[b]] = params.pair(a, b)
    kind = np.array([index[s] for s in species])
    eps = eps_tab[kind[pairs.i], kind[pairs.j]]
    sig = sig_tab[kind[pairs.i], kind[pairs.j]]

    sr6 = (sig / r) ** 6
    sc6 = (sig / params.cutoff) ** 6
    energy = float(np.sum(4 * eps * (sr6 * sr6 - sr6) - 4 * eps * (sc6 * sc6 - sc6)))
    # dE/dr divided by r, so that the force is a multiple of the pair vector
    dedr_over_r = -24.0 * eps * (2 * sr6 * sr6 - sr6) / (r * r)
    fvec = -dedr_over_r[:, None] * pairs.vectors
    np.add.at(forces, pairs.j, fvec)
    np.add.at(forces, pairs.i, -fvec)
    return CalcResult(energy, forces)


class LennardJones(Calculator):
    name = "lennard-jones"
    thread_safe = True

    def __init__(self, params: LjParams | None = None) -> None:
        self.params = params or LjParams()

    @property
    def supported_elements(self) -> frozenset[str]:
        return frozenset(self.params.species)

    def evaluate(self, structure: Structure) -> CalcResult:
        return lj_evaluate(structure, self.params)

    def reference_distance(self, element: str) -> float:
        """Pair-potential minimum, a good starting nearest-neighbor distance."""
        return 2 ** (1 / 6) * self.params.species[element][1]
