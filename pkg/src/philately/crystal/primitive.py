"""Primitive-cell search from pure translations between same-species sites."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from philately.crystal.lattice import Lattice, niggli_reduce
from philately.crystal.structure import Site, Structure


def _periodic_dist_matrix(lattice: Lattice, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    diff = a[:, None, :] - b[None, :, :]
    diff -= np.round(diff)
    return np.linalg.norm(diff @ lattice.matrix, axis=-1)


def _is_translation(structure: Structure, t: np.ndarray, tol: float, same: np.ndarray) -> bool:
    f = structure.frac_coords
    d = _periodic_dist_matrix(structure.lattice, f + t, f)
    return bool(np.all(np.any((d <= tol) & same, axis=1)))


def _hermite_basis(gens: list[list[int]]) -> np.ndarray:
    """Basis (3 rows, upper triangular) of the integer lattice spanned by `gens`."""
    rows = [list(map(int, g)) for g in gens]
    basis = []
    for col in range(3):
        while True:
            nz = [r for r in rows if r[col] != 0]
            if len(nz) <= 1:
                break
            pivot = min(nz, key=lambda r: abs(r[col]))
            for r in rows:
                if r is not pivot and r[col] != 0:
                    q = r[col] // pivot[col]
                    for k in range(3):
                        r[k] -= q * pivot[k]
        nz = [r for r in rows if r[col] != 0]
        if not nz:
            raise ValueError("translation generators are rank deficient")
        pivot = nz[0]
        if pivot[col] < 0:
            pivot = [-x for x in pivot]
        basis.append(pivot)
        rows = [r for r in rows if r[col] == 0 and any(r)]
    return np.array(basis, dtype=np.int64)


def primitive_with_transform(structure: Structure, tol: float = 1e-3) -> tuple[Structure, np.ndarray]:
    """Primitive cell plus integer S with ``structure.lattice.matrix == S @ prim.lattice.matrix``."""
    identity = np.eye(3, dtype=np.int64)
    n = len(structure)
    if n == 1:
        return structure, identity
    species = np.array(structure.species)
    occ = structure.occupancies
    same = (species[:, None] == species[None, :]) & (np.abs(occ[:, None] - occ[None, :]) < 1e-9)

    uniq, counts = np.unique(species, return_counts=True)
    ref_species = sorted(zip(counts, uniq))[0][1]
    ref = np.flatnonzero(species == ref_species)
    f = structure.frac_coords
    found = []
    for idx in ref[1:]:
        t = f[idx] - f[ref[0]]
        t -= np.floor(t)
        if _is_translation(structure, t, tol, same):
            found.append(t)
    if not found:
        return structure, identity
    k = len(found) + 1
    if n % k:
        return structure, identity

    scaled = np.array(found) * k
    if np.max(np.abs(scaled - np.round(scaled))) > 1e-2:
        return structure, identity
    gens = np.vstack([np.round(scaled).astype(np.int64), k * identity])
    h = _hermite_basis(gens.tolist())
    p = h.astype(float) / k
    if abs(abs(np.linalg.det(p)) * k - 1.0) > 1e-6:
        return structure, identity
    if np.linalg.det(p) < 0:
        p[0] = -p[0]
    prim_lattice = Lattice(p @ structure.lattice.matrix)
    reduced, q = niggli_reduce(prim_lattice)
    p_total = q.astype(float) @ p
    new_frac = f @ np.linalg.inv(p_total)
    new_frac -= np.floor(new_frac)

    kept: list[int] = []
    for i in range(n):
        dup = False
        if kept:
            d = _periodic_dist_matrix(reduced, new_frac[i:i + 1], new_frac[kept])[0]
            dup = bool(np.any((d <= tol) & same[i, kept]))
        if not dup:
            kept.append(i)
    if len(kept) * k != n:
        return structure, identity

    sites = tuple(Site(structure.sites[i].species, tuple(new_frac[i]), structure.sites[i].occupancy) for i in kept)
    meta = structure.symmetry
    if meta is not None and meta.wyckoff is not None:
        meta = replace(meta, wyckoff=tuple(meta.wyckoff[i] for i in kept))
    s = np.rint(np.linalg.inv(p_total)).astype(np.int64)
    return Structure(reduced, sites, meta, structure.source), s


def find_primitive(structure: Structure, tol: float = 1e-3) -> Structure:
    """Smallest cell of which `structure` is an exact supercell (input returned if primitive)."""
    return primitive_with_transform(structure, tol)[0]
