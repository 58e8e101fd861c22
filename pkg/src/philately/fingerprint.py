"""Duplicate detection: cheap fingerprints for bucketing, exact site matching to confirm.

Matching algorithm (deterministic, no sampling):

1. Reduce both structures to primitive cells and Niggli-reduce them.
2. Compare reduced formula and primitive site count.
3. Enumerate proper unimodular matrices U with entries in {-1, 0, 1}; keep
   those for which ``U @ lattice_b`` has lengths within `ltol` (relative)
   and angles within `atol` of lattice_a.
4. For each kept U, re-express b's sites in the mapped basis and try every
   origin shift that carries a's first minority-species site onto a
   same-species site of b.
5. A shift succeeds when, per species, a perfect bipartite matching exists
   using only pairs whose periodic distance (mean metric of both cells) is
   at most ``stol * (V / N) ** (1/3)``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import linear_sum_assignment

from philately.crystal.lattice import Lattice, niggli_reduce
from philately.crystal.primitive import find_primitive
from philately.crystal.structure import Site, Structure

PRIMITIVE_TOL = 1e-2
DEFAULT_LTOL = 0.2
DEFAULT_STOL = 0.3
DEFAULT_ATOL = 5.0


@dataclass(frozen=True)
class StructureFingerprint:
    reduced_formula: str
    primitive_site_count: int
    niggli_params: tuple[int, int, int, int, int, int]
    volume_per_atom: int

    @property
    def bucket(self) -> tuple[str, int]:
        """Coarse key used for candidate lookup; tolerant to relaxation noise."""
        return self.reduced_formula, self.primitive_site_count

    def to_dict(self) -> dict:
        return {
            "reduced_formula": self.reduced_formula,
            "primitive_site_count": self.primitive_site_count,
            "niggli_params": list(self.niggli_params),
            "volume_per_atom": self.volume_per_atom,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StructureFingerprint":
        return cls(d["reduced_formula"], int(d["primitive_site_count"]),
                   tuple(int(x) for x in d["niggli_params"]), int(d["volume_per_atom"]))


def canonical_cell(structure: Structure, tol: float = PRIMITIVE_TOL) -> Structure:
    """Primitive cell in Niggli setting, sites wrapped into it."""
    prim = find_primitive(structure, tol)
    reduced, p = niggli_reduce(prim.lattice)
    frac = prim.frac_coords @ np.linalg.inv(p.astype(float))
    sites = tuple(Site(s.species, tuple(f), s.occupancy) for s, f in zip(prim.sites, frac))
    return Structure(reduced, sites, None, structure.source)


def fingerprint(structure: Structure, q_len: float = 0.1, q_ang: float = 1.0) -> StructureFingerprint:
    """Quantized descriptors of the canonical cell; volume/atom uses `q_len` as its step in A^3."""
    canon = canonical_cell(structure)
    a, b, c, al, be, ga = canon.lattice.parameters
    params = tuple(int(round(x / q_len)) for x in (a, b, c)) + tuple(int(round(x / q_ang)) for x in (al, be, ga))
    vpa = int(round(canon.volume / len(canon) / q_len))
    return StructureFingerprint(canon.composition().reduced_formula(), len(canon), params, vpa)


@lru_cache(maxsize=1)
def _unimodular() -> np.ndarray:
    mats = np.array(list(itertools.product((-1, 0, 1), repeat=9)), dtype=np.int64).reshape(-1, 3, 3)
    det = np.rint(np.linalg.det(mats.astype(float))).astype(np.int64)
    return mats[det == 1]


def _params_from_metric(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    lengths = np.sqrt(np.stack([g[..., 0, 0], g[..., 1, 1], g[..., 2, 2]], axis=-1))
    cos = np.stack([
        g[..., 1, 2] / (lengths[..., 1] * lengths[..., 2]),
        g[..., 0, 2] / (lengths[..., 0] * lengths[..., 2]),
        g[..., 0, 1] / (lengths[..., 0] * lengths[..., 1]),
    ], axis=-1)
    return lengths, np.degrees(np.arccos(np.clip(cos, -1.0, 1.0)))


def lattice_mappings(la: Lattice, lb: Lattice, ltol: float, atol: float) -> list[np.ndarray]:
    """Proper integer bases U (|U_ij| <= 1) making U @ lb look like la."""
    len_a, ang_a = _params_from_metric(la.metric)
    mats = _unimodular()
    g = np.einsum("nij,jk,nlk->nil", mats, lb.metric, mats)
    len_b, ang_b = _params_from_metric(g)
    ok = np.all(np.abs(len_b - len_a) <= ltol * 0.5 * (len_a + len_b), axis=1)
    ok &= np.all(np.abs(ang_b - ang_a) <= atol, axis=1)
    return [m for m in mats[ok]]


_NEIGHBOR_SHIFTS = np.array(list(itertools.product((-1, 0, 1), repeat=3)), dtype=float)


def _dist_matrix(fa: np.ndarray, fb: np.ndarray, metric: np.ndarray) -> np.ndarray:
    d = fa[:, None, :] - fb[None, :, :]
    d -= np.round(d)
    d = d[:, :, None, :] + _NEIGHBOR_SHIFTS[None, None, :, :]
    d2 = np.einsum("abki,ij,abkj->abk", d, metric, d)
    return np.sqrt(np.maximum(d2.min(axis=2), 0.0))


def _sites_match(fa, fb, species_a, species_b, metric, bound) -> bool:
    for sp in np.unique(species_a):
        ia = fa[species_a == sp]
        ib = fb[species_b == sp]
        dist = _dist_matrix(ia, ib, metric)
        allowed = dist <= bound
        if not allowed.any(axis=1).all() or not allowed.any(axis=0).all():
            return False
        rows, cols = linear_sum_assignment(~allowed)
        if not allowed[rows, cols].all():
            return False
    return True


def structures_match(
    a: Structure,
    b: Structure,
    ltol: float = DEFAULT_LTOL,
    stol: float = DEFAULT_STOL,
    atol: float = DEFAULT_ATOL,
) -> bool:
    ca, cb = canonical_cell(a), canonical_cell(b)
    if len(ca) != len(cb) or ca.composition().reduced_formula() != cb.composition().reduced_formula():
        return False
    spa = np.array(ca.species)
    spb = np.array(cb.species)
    if sorted(spa) != sorted(spb):
        return False
    fa = ca.frac_coords
    n = len(ca)
    bound = stol * ((0.5 * (ca.volume + cb.volume)) / n) ** (1.0 / 3.0)

    uniq, counts = np.unique(spa, return_counts=True)
    ref = sorted(zip(counts, uniq))[0][1]
    anchor = fa[np.flatnonzero(spa == ref)[0]]
    for u in lattice_mappings(ca.lattice, cb.lattice, ltol, atol):
        metric = 0.5 * (ca.lattice.metric + u @ cb.lattice.metric @ u.T)
        fb = cb.frac_coords @ np.linalg.inv(u.astype(float))
        for j in np.flatnonzero(spb == ref):
            shifted = fb + (anchor - fb[j])
            if _sites_match(fa, shifted, spa, spb, metric, bound):
                return True
    return False
