"""Request and response bodies of the HTTP API."""

from __future__ import annotations

from typing import Any

from pydantic import BaseModel, Field

from philately.store import DbRecord


class ErrorBody(BaseModel):
    detail: str


class SubmissionCreated(BaseModel):
    id: str
    status: str
    files: int


class PhaseReportModel(BaseModel):
    phase: str
    parsed: int
    failed: int
    sampled: int
    passed: int
    pass_rate: float
    decision: str | None = None
    sampled_indices: list[int] = Field(default_factory=list)


class CandidateModel(BaseModel):
    id: str
    filename: str
    rejection_reason: str | None = None
    converged: bool | None = None
    valid: bool | None = None
    failed_checks: list[str] = Field(default_factory=list)
    e_hull: float | None = None
    score: float | None = None
    record_id: str | None = None
    canonical_of: str | None = None


class ScoreRecordModel(BaseModel):
    submission_id: str
    participant: str
    submitted_at: str
    scores: dict[str, float]
    total: float
    novel_count: int


class SubmissionStatus(BaseModel):
    id: str
    participant: str
    received_at: str
    status: str
    reports: list[PhaseReportModel]
    candidates: list[CandidateModel]
    score: ScoreRecordModel | None = None


class StructureModel(BaseModel):
    lattice: list[list[float]]
    species: list[str]
    frac_coords: list[list[float]]


class RecordModel(BaseModel):
    id: str
    formula: str
    elements: list[str]
    energy_per_atom: float
    e_hull: float = Field(description="current energy above hull, eV/atom")
    e_hull_at_insert: float
    formation_energy: float
    space_group_symbol: str | None = None
    space_group_number: int | None = None
    wyckoff: list[str] | None = None
    source: str
    submission_id: str | None = None
    score: float
    canonical_of: str | None = None
    structure: StructureModel

    @classmethod
    def from_record(cls, rec: DbRecord, current_e_hull: float) -> "RecordModel":
        sg = rec.space_group or (None, None)
        s = rec.structure
        return cls(
            id=rec.id, formula=rec.formula, elements=list(rec.elements), energy_per_atom=rec.energy_per_atom,
            e_hull=current_e_hull, e_hull_at_insert=rec.e_hull, formation_energy=rec.formation_energy,
            space_group_symbol=sg[0], space_group_number=sg[1],
            wyckoff=list(rec.wyckoff) if rec.wyckoff is not None else None, source=rec.source,
            submission_id=rec.submission_id, score=rec.score, canonical_of=rec.canonical_of,
            structure=StructureModel(lattice=s.lattice.matrix.tolist(), species=s.species,
                                     frac_coords=s.frac_coords.tolist()),
        )


class QueryResponse(BaseModel):
    total: int
    offset: int
    limit: int
    records: list[RecordModel]


class LeaderboardEntry(BaseModel):
    participant: str
    total_score: float
    novel_count: int
    first_submission: str


class HistogramBin(BaseModel):
    lo: float
    hi: float
    count: int


class Histogram(BaseModel):
    bin_width: float
    bins: list[HistogramBin]


class StatsResponse(BaseModel):
    record_count: int
    elements: dict[str, int]
    space_groups: dict[str, int]
    e_hull_histogram: Histogram

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "StatsResponse":
        return cls.model_validate(d)
