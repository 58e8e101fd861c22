"""Periodic neighbor search with cell lists on a reduced basis."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from philately.crystal.lattice import CrystalError, Lattice, lll_reduce
from philately.crystal.structure import Structure

MAX_BIN_OFFSETS = 1_000_000


class CellTooSkewed(CrystalError):
    """The image search needed for a cutoff exceeds the safety cap."""


@dataclass(frozen=True)
class PairList:
    """Pairs (i, j, n) with r = x_j + n @ lattice - x_i and |r| <= cutoff.

    Distinct sites appear once with i < j; a site paired with its own image
    appears with a lexicographically positive image vector n.
    """

    i: np.ndarray
    j: np.ndarray
    images: np.ndarray
    vectors: np.ndarray
    distances: np.ndarray

    def __len__(self) -> int:
        return len(self.i)

    def __iter__(self):
        for a, b, n, d in zip(self.i, self.j, self.images, self.distances):
            yield int(a), int(b), tuple(int(x) for x in n), float(d)


def _empty() -> PairList:
    return PairList(
        np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64),
        np.zeros((0, 3), dtype=np.int64), np.zeros((0, 3)), np.zeros(0),
    )


def _lex_positive(n: np.ndarray) -> np.ndarray:
    out = np.zeros(len(n), dtype=bool)
    decided = np.zeros(len(n), dtype=bool)
    for k in range(3):
        col = n[:, k]
        out |= ~decided & (col > 0)
        decided |= col != 0
    return out


def neighbor_pairs_arrays(lattice: Lattice, frac: np.ndarray, cutoff: float) -> PairList:
    if cutoff <= 0:
        raise ValueError("cutoff must be positive")
    frac = np.asarray(frac, dtype=float).reshape(-1, 3)
    n_atoms = len(frac)
    if n_atoms == 0:
        return _empty()

    red, p = lll_reduce(lattice)
    m_red = red.matrix
    f_red = frac @ np.linalg.inv(p.astype(float))
    shift = np.floor(f_red)
    f_red = f_red - shift
    shift = shift.astype(np.int64)
    cart_red = f_red @ m_red

    spacing = red.plane_spacings
    nb = np.maximum(1, np.floor(spacing / cutoff)).astype(np.int64)
    # keep the number of bins at or below the atom count; shrink geometrically
    # first since tiny cutoffs give astronomically many bins
    total = float(np.prod(nb.astype(float)))
    if total > n_atoms:
        nb = np.maximum(1, np.floor(nb * (n_atoms / total) ** (1 / 3))).astype(np.int64)
    while int(np.prod(nb)) > n_atoms and nb.max() > 1:
        nb[np.argmax(nb)] -= 1
    reach = (np.floor(cutoff * nb / spacing) + 1).astype(np.int64)
    n_offsets = int(np.prod(2 * reach + 1))
    if n_offsets > MAX_BIN_OFFSETS:
        raise CellTooSkewed(f"cutoff {cutoff} needs {n_offsets} bin offsets (cap {MAX_BIN_OFFSETS})")

    bins = np.minimum(np.floor(f_red * nb).astype(np.int64), nb - 1)
    flat = np.ravel_multi_index(bins.T, nb)
    n_bins = int(np.prod(nb))
    counts = np.bincount(flat, minlength=n_bins)
    order = np.argsort(flat, kind="stable")
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    rank = np.arange(n_atoms) - starts[flat[order]]
    members = np.full((n_bins, int(counts.max())), -1, dtype=np.int64)
    members[flat[order], rank] = order

    cut2 = cutoff * cutoff
    chunks_i, chunks_j, chunks_n, chunks_v = [], [], [], []
    atom_idx = np.arange(n_atoms)
    offsets = np.array(list(itertools.product(*[range(-r, r + 1) for r in reach])), dtype=np.int64)
    # process many bin offsets per numpy call; bound the scratch arrays to ~2e5 slots
    per_offset = n_atoms * members.shape[1]
    step = max(1, 200_000 // per_offset)
    for start in range(0, len(offsets), step):
        off = offsets[start:start + step]
        t = bins[None, :, :] + off[:, None, :]
        wrap = t // nb
        tb = t - wrap * nb
        cand = members[np.ravel_multi_index(np.moveaxis(tb, -1, 0), nb)]
        valid = cand >= 0
        ii = np.broadcast_to(atom_idx[None, :, None], cand.shape)[valid]
        jj = cand[valid]
        ww = np.broadcast_to(wrap[:, :, None, :], cand.shape + (3,))[valid]
        vec = cart_red[jj] + ww @ m_red - cart_red[ii]
        d2 = np.einsum("ij,ij->i", vec, vec)
        keep = d2 <= cut2
        if not keep.any():
            continue
        ii, jj, ww, vec = ii[keep], jj[keep], ww[keep], vec[keep]
        n_orig = (ww - shift[jj] + shift[ii]) @ p
        chunks_i.append(ii)
        chunks_j.append(jj)
        chunks_n.append(n_orig)
        chunks_v.append(vec)

    if not chunks_i:
        return _empty()
    i = np.concatenate(chunks_i)
    j = np.concatenate(chunks_j)
    images = np.concatenate(chunks_n).astype(np.int64)
    vectors = np.concatenate(chunks_v)
    sel = (i < j) | ((i == j) & _lex_positive(images))
    i, j, images, vectors = i[sel], j[sel], images[sel], vectors[sel]
    order = np.lexsort((images[:, 2], images[:, 1], images[:, 0], j, i))
    i, j, images, vectors = i[order], j[order], images[order], vectors[order]
    # recompute in the original basis so vectors are exact for callers
    orig_cart = frac @ lattice.matrix
    vectors = orig_cart[j] + images @ lattice.matrix - orig_cart[i]
    distances = np.linalg.norm(vectors, axis=1)
    return PairList(i, j, images, vectors, distances)


def neighbor_pairs(structure: Structure, cutoff: float) -> PairList:
    """All periodic pairs within `cutoff` (Angstrom); see PairList for the convention."""
    return neighbor_pairs_arrays(structure.lattice, structure.frac_coords, cutoff)


def min_interatomic_distance(structure: Structure) -> float:
    """Shortest periodic distance between any two sites, including self-images."""
    n = len(structure)
    red, _ = lll_reduce(structure.lattice)
    upper = float(red.lengths.min())
    r = min((structure.volume / n) ** (1.0 / 3.0), upper)
    while True:
        pairs = neighbor_pairs(structure, r * (1 + 1e-9))
        if len(pairs):
            return float(pairs.distances.min())
        r *= 2.0
