"""Lattice algebra in the row-vector convention: cart = frac @ matrix."""

from __future__ import annotations

import math

import numpy as np


class CrystalError(ValueError):
    """Invalid crystal geometry or structure data."""


class NonConvergence(CrystalError):
    """An iterative cell reduction hit its step cap."""


class Lattice:
    """Three lattice vectors stored as the rows of a 3x3 matrix (Angstrom)."""

    __slots__ = ("_matrix",)

    def __init__(self, matrix) -> None:
        m = np.array(matrix, dtype=float).reshape(3, 3)
        if not np.all(np.isfinite(m)):
            raise CrystalError("lattice contains non-finite entries")
        det = float(np.linalg.det(m))
        if det <= 1e-12 * max(1.0, float(np.abs(m).max()) ** 3):
            raise CrystalError(f"lattice must be right-handed and nondegenerate (det={det:g})")
        m.setflags(write=False)
        self._matrix = m

    @classmethod
    def from_parameters(cls, a: float, b: float, c: float, alpha: float, beta: float, gamma: float) -> "Lattice":
        """Build the standard setting: a along x, b in the xy-plane, right-handed."""
        if min(a, b, c) <= 0:
            raise CrystalError("cell lengths must be positive")
        al, be, ga = (math.radians(x) for x in (alpha, beta, gamma))
        ca, cb, cg = math.cos(al), math.cos(be), math.cos(ga)
        sg = math.sin(ga)
        if sg <= 0:
            raise CrystalError("gamma must lie strictly between 0 and 180 degrees")
        cx = c * cb
        cy = c * (ca - cb * cg) / sg
        cz2 = c * c - cx * cx - cy * cy
        if cz2 <= 0:
            raise CrystalError(f"cell angles ({alpha}, {beta}, {gamma}) do not form a valid cell")
        return cls([[a, 0.0, 0.0], [b * cg, b * sg, 0.0], [cx, cy, math.sqrt(cz2)]])

    @classmethod
    def cubic(cls, a: float) -> "Lattice":
        return cls(np.eye(3) * a)

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    @property
    def volume(self) -> float:
        return float(np.linalg.det(self._matrix))

    @property
    def lengths(self) -> np.ndarray:
        return np.linalg.norm(self._matrix, axis=1)

    @property
    def angles(self) -> np.ndarray:
        """(alpha, beta, gamma) in degrees."""
        m = self._matrix
        lens = self.lengths
        out = []
        for i, j in ((1, 2), (0, 2), (0, 1)):
            cosang = float(np.dot(m[i], m[j]) / (lens[i] * lens[j]))
            out.append(math.degrees(math.acos(max(-1.0, min(1.0, cosang)))))
        return np.array(out)

    @property
    def parameters(self) -> tuple[float, float, float, float, float, float]:
        a, b, c = (float(x) for x in self.lengths)
        al, be, ga = (float(x) for x in self.angles)
        return a, b, c, al, be, ga

    @property
    def metric(self) -> np.ndarray:
        return self._matrix @ self._matrix.T

    @property
    def inv_matrix(self) -> np.ndarray:
        return np.linalg.inv(self._matrix)

    @property
    def plane_spacings(self) -> np.ndarray:
        """Distance between adjacent lattice planes normal to each reciprocal axis."""
        return 1.0 / np.linalg.norm(self.inv_matrix.T, axis=1)

    def frac_to_cart(self, frac) -> np.ndarray:
        return np.asarray(frac, dtype=float) @ self._matrix

    def cart_to_frac(self, cart) -> np.ndarray:
        # solve instead of multiplying by the inverse: tighter round trip
        cart = np.asarray(cart, dtype=float)
        return np.linalg.solve(self._matrix.T, cart.T).T

    def transformed(self, change_of_basis) -> "Lattice":
        """Lattice whose rows are integer combinations `change_of_basis @ rows`."""
        return Lattice(np.asarray(change_of_basis, dtype=float) @ self._matrix)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Lattice):
            return NotImplemented
        return bool(np.array_equal(self._matrix, other._matrix))

    def __hash__(self) -> int:
        return hash(self._matrix.tobytes())

    def __repr__(self) -> str:
        a, b, c, al, be, ga = self.parameters
        return f"Lattice(a={a:.6g}, b={b:.6g}, c={c:.6g}, alpha={al:.6g}, beta={be:.6g}, gamma={ga:.6g})"


def wrap_frac(frac) -> np.ndarray:
    """Reduce fractional coordinates into [0, 1)."""
    f = np.asarray(frac, dtype=float) % 1.0
    # float modulo can return exactly 1.0 for tiny negative inputs
    f[f >= 1.0] = 0.0
    return f


def _sign(x: float, eps: float) -> int:
    if x > eps:
        return 1
    if x < -eps:
        return -1
    return 0


def niggli_reduce(lattice: Lattice, tol: float = 1e-5, max_steps: int = 1000) -> tuple[Lattice, np.ndarray]:
    """Krivy-Gruber reduction to the Niggli cell.

    Returns the reduced lattice and the integer change-of-basis matrix P with
    ``reduced.matrix == P @ lattice.matrix`` and ``det(P) == 1``.
    `tol` is relative: comparisons of metric entries use ``tol * V**(2/3)``.
    """
    eps = tol * lattice.volume ** (2.0 / 3.0)
    # column convention internally: basis vectors are the columns of `cols`
    cols = lattice.matrix.T.copy()
    total = np.eye(3, dtype=np.int64)

    def params():
        g = cols.T @ cols
        return g[0, 0], g[1, 1], g[2, 2], 2 * g[1, 2], 2 * g[0, 2], 2 * g[0, 1]

    def apply(t):
        nonlocal cols, total
        t = np.asarray(t, dtype=np.int64)
        cols = cols @ t
        total = total @ t

    for _ in range(max_steps):
        A, B, C, xi, eta, zeta = params()

        if A > B + eps or (not abs(A - B) > eps and abs(xi) > abs(eta) + eps):
            apply([[0, -1, 0], [-1, 0, 0], [0, 0, -1]])
            A, B, C, xi, eta, zeta = params()

        if B > C + eps or (not abs(B - C) > eps and abs(eta) > abs(zeta) + eps):
            apply([[-1, 0, 0], [0, 0, -1], [0, -1, 0]])
            continue

        l, m, n = _sign(xi, eps), _sign(eta, eps), _sign(zeta, eps)
        if l * m * n == 1:
            i = -1 if l == -1 else 1
            j = -1 if m == -1 else 1
            k = -1 if n == -1 else 1
            apply(np.diag([i, j, k]))
        else:
            ijk = [1, 1, 1]
            free = None
            for idx, s in enumerate((l, m, n)):
                if s == 1:
                    ijk[idx] = -1
                elif s == 0:
                    free = idx
            if ijk[0] * ijk[1] * ijk[2] == -1:
                if free is not None:
                    ijk[free] = -1
            apply(np.diag(ijk))
        A, B, C, xi, eta, zeta = params()

        if (abs(xi) > B + eps
                or (not abs(B - xi) > eps and 2 * eta < zeta - eps)
                or (not abs(B + xi) > eps and zeta < -eps)):
            apply([[1, 0, 0], [0, 1, -int(np.sign(xi))], [0, 0, 1]])
            continue

        if (abs(eta) > A + eps
                or (not abs(A - eta) > eps and 2 * xi < zeta - eps)
                or (not abs(A + eta) > eps and zeta < -eps)):
            apply([[1, 0, -int(np.sign(eta))], [0, 1, 0], [0, 0, 1]])
            continue

        if (abs(zeta) > A + eps
                or (not abs(A - zeta) > eps and 2 * xi < eta - eps)
                or (not abs(A + zeta) > eps and eta < -eps)):
            apply([[1, -int(np.sign(zeta)), 0], [0, 1, 0], [0, 0, 1]])
            continue

        if (xi + eta + zeta + A + B < -eps
                or (not abs(xi + eta + zeta + A + B) > eps and 2 * (A + eta) + zeta > eps)):
            apply([[1, 0, 1], [0, 1, 1], [0, 0, 1]])
            continue

        break
    else:
        raise NonConvergence(f"Niggli reduction did not converge in {max_steps} steps")

    change = total.T
    return Lattice(change.astype(float) @ lattice.matrix), change


def lll_reduce(lattice: Lattice, delta: float = 0.75) -> tuple[Lattice, np.ndarray]:
    """LLL-reduce the basis; cheaper than Niggli when only a short basis is needed.

    Returns (reduced lattice, integer P) with ``reduced.matrix == P @ lattice.matrix``.
    """
    b = lattice.matrix.copy()
    p = np.eye(3, dtype=np.int64)
    k = 1
    guard = 0

    def gram_schmidt(v):
        bstar = np.zeros_like(v)
        mu = np.zeros((3, 3))
        for i in range(3):
            bstar[i] = v[i]
            for j in range(i):
                mu[i, j] = v[i] @ bstar[j] / (bstar[j] @ bstar[j])
                bstar[i] -= mu[i, j] * bstar[j]
        return bstar, mu

    bstar, mu = gram_schmidt(b)
    while k < 3:
        guard += 1
        if guard > 10000:
            raise NonConvergence("LLL reduction did not converge")
        for j in range(k - 1, -1, -1):
            q = round(mu[k, j])
            if q != 0:
                b[k] -= q * b[j]
                p[k] -= q * p[j]
                bstar, mu = gram_schmidt(b)
        if bstar[k] @ bstar[k] >= (delta - mu[k, k - 1] ** 2) * (bstar[k - 1] @ bstar[k - 1]):
            k += 1
        else:
            b[[k, k - 1]] = b[[k - 1, k]]
            p[[k, k - 1]] = p[[k - 1, k]]
            bstar, mu = gram_schmidt(b)
            k = max(k - 1, 1)
    if np.linalg.det(p) < 0:
        b = -b
        p = -p
    return Lattice(p.astype(float) @ lattice.matrix), p
