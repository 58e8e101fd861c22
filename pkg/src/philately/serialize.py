"""Lossless JSON-friendly encoding of structures (floats round-trip exactly)."""

from __future__ import annotations

from typing import Any

import numpy as np

from philately.crystal.lattice import Lattice
from philately.crystal.structure import Site, Structure, SymmetryMeta


def structure_to_dict(s: Structure) -> dict[str, Any]:
    d: dict[str, Any] = {
        "lattice": [float(x) for x in s.lattice.matrix.ravel()],
        "species": s.species,
        "frac": [list(site.frac) for site in s.sites],
        "occupancy": [site.occupancy for site in s.sites],
        "source": s.source,
    }
    if s.symmetry is not None:
        d["symmetry"] = {
            "symbol": s.symmetry.space_group_symbol,
            "number": s.symmetry.space_group_number,
            "wyckoff": list(s.symmetry.wyckoff) if s.symmetry.wyckoff is not None else None,
        }
    return d


def structure_from_dict(d: dict[str, Any]) -> Structure:
    lattice = Lattice(np.array(d["lattice"], dtype=float).reshape(3, 3))
    sites = tuple(
        Site(sp, tuple(f), float(o)) for sp, f, o in zip(d["species"], d["frac"], d["occupancy"], strict=True)
    )
    meta = None
    if d.get("symmetry"):
        sym = d["symmetry"]
        wy = sym.get("wyckoff")
        meta = SymmetryMeta(sym.get("symbol"), sym.get("number"), tuple(wy) if wy is not None else None)
    return Structure(lattice, sites, meta, d.get("source", ""))
