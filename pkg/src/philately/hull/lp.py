"""Dense two-phase simplex with Bland's rule for  min c.x  s.t.  A x = b, x >= 0."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PIVOT_TOL = 1e-12
FEAS_TOL = 1e-9


class LpError(ArithmeticError):
    pass


class Infeasible(LpError):
    pass


class Unbounded(LpError):
    pass


@dataclass(frozen=True)
class LpResult:
    x: np.ndarray
    objective: float
    iterations: int


def _pivot(t: np.ndarray, row: int, col: int) -> None:
    t[row] /= t[row, col]
    for r in range(t.shape[0]):
        if r != row and t[r, col] != 0.0:
            t[r] -= t[r, col] * t[row]
    # kill round-off in the pivot column
    t[:, col] = 0.0
    t[row, col] = 1.0


def _run(t: np.ndarray, basis: list[int], n_cols: int, max_iter: int) -> int:
    """Iterate on tableau `t` (last row = reduced costs, last column = rhs)."""
    m = len(basis)
    for it in range(max_iter):
        reduced = t[m, :n_cols]
        candidates = np.flatnonzero(reduced < -PIVOT_TOL)
        if candidates.size == 0:
            return it
        col = int(candidates[0])  # Bland: lowest index enters
        column = t[:m, col]
        rows = np.flatnonzero(column > PIVOT_TOL)
        if rows.size == 0:
            raise Unbounded("objective unbounded below")
        ratios = t[rows, -1] / column[rows]
        best = ratios.min()
        ties = rows[ratios <= best + PIVOT_TOL * max(1.0, abs(best))]
        row = int(min(ties, key=lambda r: basis[r]))  # Bland: lowest basic index leaves
        _pivot(t, row, col)
        basis[row] = col
    raise LpError(f"simplex did not terminate in {max_iter} iterations")


def lp_minimize(costs, eq_matrix, eq_rhs, max_iter: int = 50_000) -> LpResult:
    c = np.asarray(costs, dtype=float).ravel()
    a = np.array(eq_matrix, dtype=float, ndmin=2)
    b = np.asarray(eq_rhs, dtype=float).ravel().copy()
    n = c.size
    if a.size == 0:
        a = a.reshape(0, n)
    m = a.shape[0]
    if a.shape[1] != n or b.size != m:
        raise ValueError("shape mismatch between costs, matrix and rhs")
    if m == 0:
        if np.any(c < 0):
            raise Unbounded("objective unbounded below")
        return LpResult(np.zeros(n), 0.0, 0)

    neg = b < 0
    a[neg] *= -1
    b[neg] *= -1

    # phase 1: artificial variables n..n+m-1
    t = np.zeros((m + 1, n + m + 1))
    t[:m, :n] = a
    t[:m, n:n + m] = np.eye(m)
    t[:m, -1] = b
    t[m, :n] = -a.sum(axis=0)
    t[m, -1] = -b.sum()
    basis = list(range(n, n + m))
    it1 = _run(t, basis, n + m, max_iter)
    if -t[m, -1] > FEAS_TOL * max(1.0, float(b.sum())):
        raise Infeasible("no x >= 0 satisfies the equality constraints")

    keep = []
    for r in range(m):
        if basis[r] >= n:
            cols = np.flatnonzero(np.abs(t[r, :n]) > PIVOT_TOL)
            if cols.size == 0:
                continue  # redundant constraint
            _pivot(t, r, int(cols[0]))
            basis[r] = int(cols[0])
        keep.append(r)

    # phase 2 on the original columns
    t2 = np.zeros((len(keep) + 1, n + 1))
    t2[:-1, :n] = t[keep, :n]
    t2[:-1, -1] = t[keep, -1]
    basis2 = [basis[r] for r in keep]
    t2[-1, :n] = c
    for r, bv in enumerate(basis2):
        t2[-1] -= c[bv] * t2[r]
    it2 = _run(t2, basis2, n, max_iter)

    x = np.zeros(n)
    for r, bv in enumerate(basis2):
        x[bv] = max(0.0, t2[r, -1])
    return LpResult(x, float(c @ x), it1 + it2)
