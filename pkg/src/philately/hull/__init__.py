"""Thermodynamic stability: formation energy and energy above hull."""

from philately.hull.lp import Infeasible, LpError, LpResult, Unbounded, lp_minimize
from philately.hull.phase import (
    DEFAULT_EPS_HULL,
    Decomposition,
    ElementMismatch,
    HullEntry,
    HullError,
    HullIndex,
    HullSystem,
    MissingReference,
    e_above_hull,
    formation_energy_per_atom,
    hull_energy,
    read_entries,
    recompute_system,
    update_system,
    write_entries,
)

__all__ = [
    "DEFAULT_EPS_HULL", "Decomposition", "ElementMismatch", "HullEntry", "HullError", "HullIndex",
    "HullSystem", "Infeasible", "LpError", "LpResult", "MissingReference", "Unbounded", "e_above_hull",
    "formation_energy_per_atom", "hull_energy", "lp_minimize", "read_entries", "recompute_system",
    "update_system", "write_entries",
]
