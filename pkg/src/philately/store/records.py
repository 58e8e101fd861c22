"""Persisted record types and the log line codec."""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field
from typing import Any

from philately.crystal.structure import Structure
from philately.fingerprint import StructureFingerprint
from philately.serialize import structure_from_dict, structure_to_dict


@dataclass(frozen=True)
class DbRecord:
    id: str
    structure: Structure
    formula: str
    elements: tuple[str, ...]
    energy_per_atom: float
    e_hull: float
    formation_energy: float
    fingerprint: StructureFingerprint
    source: str = ""
    submission_id: str | None = None
    score: float = 0.0
    canonical_of: str | None = None
    space_group: tuple[str | None, int | None] | None = None
    wyckoff: tuple[str, ...] | None = None

    @property
    def is_canonical(self) -> bool:
        return self.canonical_of is None

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "structure": structure_to_dict(self.structure),
            "formula": self.formula,
            "elements": list(self.elements),
            "energy_per_atom": self.energy_per_atom,
            "e_hull": self.e_hull,
            "formation_energy": self.formation_energy,
            "fingerprint": self.fingerprint.to_dict(),
            "source": self.source,
            "submission_id": self.submission_id,
            "score": self.score,
            "canonical_of": self.canonical_of,
            "space_group": list(self.space_group) if self.space_group is not None else None,
            "wyckoff": list(self.wyckoff) if self.wyckoff is not None else None,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "DbRecord":
        sg = d.get("space_group")
        wy = d.get("wyckoff")
        return cls(
            id=d["id"],
            structure=structure_from_dict(d["structure"]),
            formula=d["formula"],
            elements=tuple(d["elements"]),
            energy_per_atom=float(d["energy_per_atom"]),
            e_hull=float(d["e_hull"]),
            formation_energy=float(d["formation_energy"]),
            fingerprint=StructureFingerprint.from_dict(d["fingerprint"]),
            source=d.get("source", ""),
            submission_id=d.get("submission_id"),
            score=float(d.get("score", 0.0)),
            canonical_of=d.get("canonical_of"),
            space_group=(sg[0], sg[1]) if sg is not None else None,
            wyckoff=tuple(wy) if wy is not None else None,
        )


@dataclass(frozen=True)
class Query:
    elements: tuple[str, ...] = ()
    formula: str | None = None
    space_group: int | None = None
    source: str | None = None
    wyckoff: tuple[str, ...] = ()
    max_ehull: float | None = None
    canonical_only: bool = True
    offset: int = 0
    limit: int = 100


@dataclass(frozen=True)
class LeaderboardRow:
    participant: str
    total_score: float
    novel_count: int
    first_submission: str


@dataclass(frozen=True)
class CorpusStats:
    record_count: int
    elements: dict[str, int]
    space_groups: dict[str, int]
    e_hull_bins: list[dict[str, float]] = field(default_factory=list)
    bin_width: float = 0.1

    def to_dict(self) -> dict[str, Any]:
        return {
            "record_count": self.record_count,
            "elements": self.elements,
            "space_groups": self.space_groups,
            "e_hull_histogram": {"bin_width": self.bin_width, "bins": self.e_hull_bins},
        }


def _dumps(obj: Any) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def encode_line(entry: dict[str, Any]) -> bytes:
    """``<payload length> <crc32 hex> <json payload>\\n``"""
    payload = _dumps(entry)
    return f"{len(payload)} {zlib.crc32(payload):08x} ".encode("ascii") + payload + b"\n"


def decode_lines(data: bytes) -> tuple[list[dict[str, Any]], int]:
    """Decode complete, checksummed lines; returns entries and the end offset of the intact prefix."""
    out: list[dict[str, Any]] = []
    pos = 0
    n = len(data)
    while pos < n:
        sp1 = data.find(b" ", pos, pos + 24)
        if sp1 < 0:
            break
        sp2 = data.find(b" ", sp1 + 1, sp1 + 12)
        if sp2 < 0:
            break
        try:
            length = int(data[pos:sp1])
            crc = int(data[sp1 + 1:sp2], 16)
        except ValueError:
            break
        start = sp2 + 1
        end = start + length
        if end >= n or data[end:end + 1] != b"\n":
            break
        payload = data[start:end]
        if zlib.crc32(payload) != crc:
            break
        try:
            out.append(json.loads(payload))
        except ValueError:
            break
        pos = end + 1
    return out, pos
