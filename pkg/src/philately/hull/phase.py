"""Formation energies and energy above the lower convex hull, via linear programming."""

from __future__ import annotations

import itertools
import json
import math
from collections.abc import Iterable, Mapping
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from philately.crystal.structure import Composition, composition_from_fractions, parse_formula
from philately.hull.lp import lp_minimize

DEFAULT_EPS_HULL = 1e-6
# e_above_hull values below this are round-off and reported as exactly zero
_ZERO = 1e-12


class HullError(ValueError):
    pass


class MissingReference(HullError):
    def __init__(self, element: str) -> None:
        super().__init__(f"no elemental reference energy for {element}")
        self.element = element


class ElementMismatch(HullError):
    pass


@dataclass(frozen=True)
class HullEntry:
    id: str
    fractions: Mapping[str, float]
    energy_per_atom: float
    source: str = ""

    def __post_init__(self) -> None:
        fr = {el: float(v) for el, v in self.fractions.items() if v != 0}
        if not fr or any(v < 0 or not math.isfinite(v) for v in fr.values()):
            raise HullError(f"entry {self.id}: invalid fractions {dict(self.fractions)}")
        total = math.fsum(fr.values())
        if abs(total - 1.0) > 1e-9:
            raise HullError(f"entry {self.id}: fractions sum to {total}, not 1")
        object.__setattr__(self, "fractions", {el: v / total for el, v in sorted(fr.items())})
        if not math.isfinite(self.energy_per_atom):
            raise HullError(f"entry {self.id}: non-finite energy")

    @classmethod
    def from_composition(cls, id: str, comp: Composition, energy_per_atom: float, source: str = "") -> "HullEntry":
        return cls(id, comp.fractions(), energy_per_atom, source)

    @property
    def elements(self) -> frozenset[str]:
        return frozenset(self.fractions)

    @property
    def formula(self) -> str:
        return composition_from_fractions(dict(self.fractions)).formula()


@dataclass(frozen=True)
class Decomposition:
    components: tuple[tuple[str, float], ...]

    def as_dict(self) -> dict[str, float]:
        return dict(self.components)


def formation_energy_per_atom(entry: HullEntry, refs: Mapping[str, float]) -> float:
    total = entry.energy_per_atom
    for el, x in entry.fractions.items():
        if el not in refs:
            raise MissingReference(el)
        total -= x * refs[el]
    return total


def _pool(entry: HullEntry, competitors: Iterable[HullEntry], refs: Mapping[str, float]) -> list[HullEntry]:
    elements = entry.elements
    pool = [entry]
    seen = {entry.id}
    for c in competitors:
        if c.id in seen or not c.elements <= elements:
            continue
        seen.add(c.id)
        pool.append(c)
    # the references themselves are always hull vertices
    for el in sorted(elements):
        if el not in seen:
            if el not in refs:
                raise MissingReference(el)
            pool.append(HullEntry(el, {el: 1.0}, refs[el], "reference"))
    return pool


def hull_energy(fractions: Mapping[str, float], pool: list[HullEntry], refs: Mapping[str, float]) -> tuple[float, np.ndarray]:
    """Lowest formation energy reachable by mixing `pool` at the given composition."""
    elements = sorted(fractions)
    energies = np.array([formation_energy_per_atom(p, refs) for p in pool])
    rows = [np.ones(len(pool))]
    rhs = [1.0]
    # the sum row makes one element row redundant; drop the last
    for el in elements[:-1]:
        rows.append(np.array([p.fractions.get(el, 0.0) for p in pool]))
        rhs.append(fractions[el])
    res = lp_minimize(energies, np.array(rows), np.array(rhs))
    return res.objective, res.x


def e_above_hull(
    entry: HullEntry, competitors: Iterable[HullEntry], refs: Mapping[str, float]
) -> tuple[float, Decomposition]:
    """Energy per atom above the lower hull, and the hull phases realising it.

    Elemental reference entries are synthesised from `refs` (their ids are
    the element symbols) unless an entry with that id is already present.
    """
    pool = _pool(entry, competitors, refs)
    objective, x = hull_energy(entry.fractions, pool, refs)
    e = formation_energy_per_atom(entry, refs) - objective
    if e <= _ZERO:
        return 0.0, Decomposition(((entry.id, 1.0),))
    weights = [(pool[k].id, float(x[k])) for k in range(len(pool)) if x[k] > _ZERO]
    total = math.fsum(w for _, w in weights)
    return e, Decomposition(tuple((i, w / total) for i, w in weights))


@dataclass(frozen=True)
class HullSystem:
    """Entries of one chemical system with their current e_above_hull values."""

    elements: frozenset[str]
    refs: Mapping[str, float]
    entries: tuple[HullEntry, ...] = ()
    e_hull: tuple[float, ...] = ()
    eps_hull: float = DEFAULT_EPS_HULL

    def __post_init__(self) -> None:
        object.__setattr__(self, "elements", frozenset(self.elements))
        missing = sorted(self.elements - set(self.refs))
        if missing:
            raise MissingReference(missing[0])

    @property
    def stable(self) -> tuple[bool, ...]:
        return tuple(e <= self.eps_hull for e in self.e_hull)

    def stable_ids(self) -> set[str]:
        return {en.id for en, ok in zip(self.entries, self.stable) if ok}

    def value(self, entry_id: str) -> float:
        for en, e in zip(self.entries, self.e_hull):
            if en.id == entry_id:
                return e
        raise KeyError(entry_id)


def recompute_system(system: HullSystem) -> HullSystem:
    values = tuple(e_above_hull(en, system.entries, system.refs)[0] for en in system.entries)
    return HullSystem(system.elements, system.refs, system.entries, values, system.eps_hull)


def update_system(system: HullSystem, new_entry: HullEntry, eps_hull: float | None = None) -> HullSystem:
    """Copy of `system` with `new_entry` inserted and stability flags refreshed.

    Old values are recomputed only when the newcomer is itself on the hull.
    """
    eps = system.eps_hull if eps_hull is None else eps_hull
    if not new_entry.elements <= system.elements:
        extra = sorted(new_entry.elements - system.elements)
        raise ElementMismatch(f"entry {new_entry.id} has elements {extra} outside the system")
    entries = system.entries + (new_entry,)
    e_new, _ = e_above_hull(new_entry, system.entries, system.refs)
    if e_new <= eps:
        values = tuple(e_above_hull(en, entries, system.refs)[0] for en in entries)
    else:
        values = system.e_hull + (e_new,)
    return HullSystem(system.elements, system.refs, entries, values, eps)


class HullIndex:
    """Entries partitioned by element set; hull members plus probe entries.

    Members define the hull; probes (e.g. duplicates) only get evaluated.
    Not thread-safe; the owning store serializes mutation.
    """

    def __init__(self, refs: Mapping[str, float] | None = None, eps_hull: float = DEFAULT_EPS_HULL) -> None:
        self.refs: dict[str, float] = dict(refs or {})
        self.eps_hull = eps_hull
        self._by_system: dict[frozenset[str], list[HullEntry]] = {}
        self._probes: dict[str, HullEntry] = {}
        self._entries: dict[str, HullEntry] = {}
        self.current: dict[str, float] = {}

    def __len__(self) -> int:
        return len(self._entries)

    def competitors(self, elements: frozenset[str]) -> list[HullEntry]:
        out: list[HullEntry] = []
        if len(elements) <= 10:
            els = sorted(elements)
            for k in range(1, len(els) + 1):
                for combo in itertools.combinations(els, k):
                    out.extend(self._by_system.get(frozenset(combo), ()))
        else:
            for key, entries in self._by_system.items():
                if key <= elements:
                    out.extend(entries)
        return out

    def evaluate(self, entry: HullEntry) -> tuple[float, Decomposition]:
        return e_above_hull(entry, self.competitors(entry.elements), self.refs)

    def add(self, entry: HullEntry, member: bool = True) -> float:
        if entry.id in self._entries:
            raise HullError(f"duplicate hull entry id {entry.id}")
        e, _ = self.evaluate(entry)
        self._entries[entry.id] = entry
        self.current[entry.id] = e
        if not member:
            self._probes[entry.id] = entry
            return e
        self._by_system.setdefault(entry.elements, []).append(entry)
        if e <= self.eps_hull:
            for other in list(self._entries.values()):
                if other.id != entry.id and entry.elements <= other.elements:
                    self.current[other.id] = self.evaluate(other)[0]
        return e

    def stable_ids(self) -> set[str]:
        return {i for i, e in self.current.items() if e <= self.eps_hull and i not in self._probes}


def write_entries(path: str | Path, entries: Iterable[HullEntry]) -> None:
    """Line-delimited interchange file: one JSON object per entry."""
    with open(path, "w", encoding="utf-8") as fh:
        for en in entries:
            fh.write(json.dumps({"id": en.id, "formula": en.formula,
                                 "energy_per_atom": en.energy_per_atom, "source": en.source}) + "\n")


def read_entries(path: str | Path) -> list[HullEntry]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                comp = parse_formula(rec["formula"])
                out.append(HullEntry.from_composition(str(rec["id"]), comp, float(rec["energy_per_atom"]),
                                                      str(rec.get("source", ""))))
            except (KeyError, ValueError, TypeError) as exc:
                raise HullError(f"{path}:{lineno}: bad entry record ({exc})") from None
    return out
