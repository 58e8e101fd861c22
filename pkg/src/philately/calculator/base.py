from __future__ import annotations

import abc
from collections.abc import Iterable
from dataclasses import dataclass

import numpy as np

from philately.crystal.structure import Structure


class CalculatorError(RuntimeError):
    """The calculator could not produce energies/forces for a structure."""


class UnknownElement(CalculatorError):
    pass


class Overlap(CalculatorError):
    pass


@dataclass(frozen=True)
class CalcResult:
    energy: float
    forces: np.ndarray

    @property
    def n_sites(self) -> int:
        return len(self.forces)

    @property
    def energy_per_atom(self) -> float:
        return self.energy / len(self.forces)


class Calculator(abc.ABC):
    """Energy/force provider. Implementations must be deterministic per input.

    ``thread_safe = False`` tells the pipeline to serialize evaluate() calls.
    """

    name: str = "calculator"
    thread_safe: bool = True

    @property
    @abc.abstractmethod
    def supported_elements(self) -> frozenset[str]:
        ...

    @abc.abstractmethod
    def evaluate(self, structure: Structure) -> CalcResult:
        ...

    def supports(self, elements: Iterable[str]) -> bool:
        return set(elements) <= self.supported_elements

    def unsupported(self, elements: Iterable[str]) -> list[str]:
        return sorted(set(elements) - self.supported_elements)

    def check_elements(self, structure: Structure) -> None:
        missing = self.unsupported(structure.species)
        if missing:
            raise UnknownElement(f"{self.name} has no parameters for {', '.join(missing)}")


def check_result(result: CalcResult, n_sites: int) -> CalcResult:
    forces = np.asarray(result.forces, dtype=float)
    if forces.shape != (n_sites, 3):
        raise CalculatorError(f"expected forces of shape ({n_sites}, 3), got {forces.shape}")
    return CalcResult(float(result.energy), forces)
