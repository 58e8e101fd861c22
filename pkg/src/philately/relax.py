"""Fixed-cell FIRE relaxation of atomic positions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from philately.calculator.base import CalcResult, Calculator, CalculatorError
from philately.crystal.structure import Structure


class NonFinite(CalculatorError):
    def __init__(self, step: int) -> None:
        super().__init__(f"non-finite energy or forces at step {step}")
        self.step = step


@dataclass(frozen=True)
class RelaxSettings:
    fmax: float = 0.05
    max_steps: int = 500
    dt_start: float = 0.1
    dt_max: float = 1.0
    f_inc: float = 1.1
    f_dec: float = 0.5
    alpha_start: float = 0.1
    f_alpha: float = 0.99
    n_min: int = 5
    # per-site displacement cap per step (Angstrom)
    max_move: float = 0.2
    record_trajectory: bool = False

    def __post_init__(self) -> None:
        if self.fmax <= 0:
            raise ValueError("fmax must be positive")
        if not (0 < self.dt_start <= self.dt_max):
            raise ValueError("need 0 < dt_start <= dt_max")
        if self.max_steps < 0:
            raise ValueError("max_steps must be non-negative")
        if min(self.f_inc, self.f_dec, self.alpha_start, self.f_alpha, self.max_move) <= 0 or self.n_min < 0:
            raise ValueError("FIRE constants must be positive")


@dataclass(frozen=True)
class RelaxResult:
    final: Structure
    converged: bool
    steps: int
    energy_initial: float
    energy_final: float
    max_force_final: float
    trajectory: tuple[Structure, ...] | None = None


def _max_force(result: CalcResult) -> float:
    return float(np.max(np.linalg.norm(result.forces, axis=1)))


def _evaluate(calc: Calculator, structure: Structure, step: int) -> CalcResult:
    result = calc.evaluate(structure)
    if not np.isfinite(result.energy) or not np.all(np.isfinite(result.forces)):
        raise NonFinite(step)
    return result


def relax_fire(structure: Structure, calc: Calculator, settings: RelaxSettings | None = None) -> RelaxResult:
    s = settings or RelaxSettings()
    calc.check_elements(structure)
    result = _evaluate(calc, structure, 0)
    e0 = result.energy
    current = structure
    x = current.cart_coords
    v: np.ndarray | None = None
    dt, alpha, n_pos = s.dt_start, s.alpha_start, 0
    steps = 0
    traj = [structure] if s.record_trajectory else None
    fnow = _max_force(result)
    converged = fnow <= s.fmax

    while not converged and steps < s.max_steps:
        f = result.forces
        if v is None:
            v = np.zeros_like(x)
        else:
            power = float(np.vdot(f, v))
            if power > 0.0:
                v = (1.0 - alpha) * v + alpha * np.linalg.norm(v) * f / np.linalg.norm(f)
                if n_pos > s.n_min:
                    dt = min(dt * s.f_inc, s.dt_max)
                    alpha *= s.f_alpha
                n_pos += 1
            else:
                v[:] = 0.0
                dt *= s.f_dec
                alpha = s.alpha_start
                n_pos = 0
        v = v + dt * f
        dx = dt * v
        longest = float(np.max(np.linalg.norm(dx, axis=1)))
        if longest > s.max_move:
            dx *= s.max_move / longest
        current = current.with_cart_coords(x + dx)
        x = current.cart_coords
        steps += 1
        result = _evaluate(calc, current, steps)
        if traj is not None:
            traj.append(current)
        fnow = _max_force(result)
        converged = fnow <= s.fmax

    return RelaxResult(
        final=current,
        converged=converged,
        steps=steps,
        energy_initial=e0,
        energy_final=result.energy,
        max_force_final=fnow,
        trajectory=tuple(traj) if traj is not None else None,
    )
