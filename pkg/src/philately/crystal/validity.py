"""Per-structure quality checks used by the sampling and evaluation gates."""

from __future__ import annotations

from dataclasses import dataclass, field


from philately.elements import SYMBOLS
from philately.crystal.neighbors import min_interatomic_distance, neighbor_pairs
from philately.crystal.structure import Structure

DEFAULT_ALLOWED = frozenset(SYMBOLS[:103])
COLOCATION_TOL = 1e-3


@dataclass(frozen=True)
class ValidityCriteria:
    d_min: float = 0.5
    v_min: float = 1.0
    v_max: float = 1000.0
    n_max: int = 500
    allowed_elements: frozenset[str] = DEFAULT_ALLOWED


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    value: float | str


@dataclass(frozen=True)
class ValidityReport:
    checks: tuple[CheckResult, ...] = field(default_factory=tuple)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failed(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "checks": [{"name": c.name, "passed": c.passed, "value": c.value} for c in self.checks],
        }


def _max_site_occupancy(structure: Structure) -> float:
    occ = structure.occupancies.copy()
    if len(structure) == 1:
        return float(occ[0])
    pairs = neighbor_pairs(structure, COLOCATION_TOL)
    parent = list(range(len(structure)))

    def root(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j in zip(pairs.i, pairs.j):
        if i != j:
            a, b = root(int(i)), root(int(j))
            if a != b:
                parent[b] = a
    totals: dict[int, float] = {}
    for idx, o in enumerate(occ):
        r = root(idx)
        totals[r] = totals.get(r, 0.0) + float(o)
    return max(totals.values())


def validate_structure(structure: Structure, criteria: ValidityCriteria | None = None) -> ValidityReport:
    c = criteria or ValidityCriteria()
    n = len(structure)
    d = min_interatomic_distance(structure)
    vpa = structure.volume / n
    bad = sorted(set(structure.species) - c.allowed_elements)
    occ = _max_site_occupancy(structure)
    checks = (
        CheckResult("min_distance", bool(d >= c.d_min), d),
        CheckResult("volume_per_atom", bool(c.v_min <= vpa <= c.v_max), vpa),
        CheckResult("site_count", n <= c.n_max, float(n)),
        CheckResult("elements", not bad, ",".join(bad)),
        CheckResult("occupancy", bool(occ <= 1.0 + 1e-9), occ),
    )
    return ValidityReport(checks)
