"""Crystallographic symmetry operators written as "x, y+1/2, -z"."""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from philately.cif.errors import SymOpError

_TERM_RE = re.compile(r"[+-]?[^+-]+")
_VAR_TERM = re.compile(r"^(\d+(?:\.\d*)?(?:/\d+)?|\.\d+)?\*?([xyz])$")
_CONST_TERM = re.compile(r"^(\d+(?:\.\d*)?|\.\d+)(?:/(\d+))?$")
_VARS = "xyz"


@dataclass(frozen=True)
class SymOp:
    rotation: tuple[tuple[int, int, int], ...]
    translation: tuple[Fraction, Fraction, Fraction]

    @property
    def rotation_matrix(self) -> np.ndarray:
        return np.array(self.rotation, dtype=float)

    @property
    def translation_vector(self) -> np.ndarray:
        return np.array([float(t) for t in self.translation])

    def apply(self, frac) -> np.ndarray:
        """Image of fractional coordinates (one point or an (N, 3) array), not wrapped."""
        f = np.asarray(frac, dtype=float)
        return f @ self.rotation_matrix.T + self.translation_vector

    def __str__(self) -> str:
        return format_symop(self)

    @classmethod
    def identity(cls) -> "SymOp":
        return cls(((1, 0, 0), (0, 1, 0), (0, 0, 1)), (Fraction(0),) * 3)


def _to_fraction(number: str, denom: str | None = None) -> Fraction:
    value = Fraction(number)
    if denom is not None:
        if int(denom) == 0:
            raise SymOpError("division by zero in symmetry operator")
        value /= int(denom)
    if "." in number:
        # decimals like 0.3333 stand for small-denominator fractions
        approx = value.limit_denominator(12)
        if abs(approx - value) < Fraction(1, 1000):
            value = approx
    return value


def _parse_component(text: str, expr: str) -> tuple[list[Fraction], Fraction]:
    body = text.replace(" ", "").replace("\t", "").lower()
    if not body:
        raise SymOpError(f"empty component in {expr!r}")
    if "".join(_TERM_RE.findall(body)) != body:
        raise SymOpError(f"cannot parse component {text!r} in {expr!r}")
    coeffs = [Fraction(0)] * 3
    const = Fraction(0)
    for term in _TERM_RE.findall(body):
        sign = -1 if term[0] == "-" else 1
        core = term.lstrip("+-")
        if not core or len(term) - len(core) > 1:
            raise SymOpError(f"bad term {term!r} in {expr!r}")
        m = _VAR_TERM.match(core)
        if m:
            if m.group(1) is None:
                coef = Fraction(1)
            else:
                num, _, den = m.group(1).partition("/")
                coef = _to_fraction(num, den or None)
            coeffs[_VARS.index(m.group(2))] += sign * coef
            continue
        m = _CONST_TERM.match(core)
        if m:
            const += sign * _to_fraction(m.group(1), m.group(2))
            continue
        raise SymOpError(f"unknown token {term!r} in {expr!r}")
    return coeffs, const


def parse_symop(expr: str) -> SymOp:
    parts = expr.strip().strip("'\"").split(",")
    if len(parts) != 3:
        raise SymOpError(f"expected three components in {expr!r}")
    rows: list[tuple[int, int, int]] = []
    trans: list[Fraction] = []
    for part in parts:
        coeffs, const = _parse_component(part, expr)
        if any(c.denominator != 1 or abs(c) > 1 for c in coeffs):
            raise SymOpError(f"non-crystallographic coefficient in {expr!r}")
        rows.append(tuple(int(c) for c in coeffs))
        trans.append(const - (const.numerator // const.denominator))
    det = round(np.linalg.det(np.array(rows, dtype=float)))
    if det not in (1, -1):
        raise SymOpError(f"rotation part of {expr!r} has determinant {det}")
    return SymOp(tuple(rows), tuple(trans))


def format_symop(op: SymOp) -> str:
    """Canonical text form; parse_symop(format_symop(op)) == op."""
    comps = []
    for row, t in zip(op.rotation, op.translation):
        text = ""
        for coef, var in zip(row, _VARS):
            if coef:
                text += ("+" if coef > 0 else "-") + var
        if t:
            text += f"+{t}"
        text = text.lstrip("+") or "0"
        comps.append(text)
    return ",".join(comps)
