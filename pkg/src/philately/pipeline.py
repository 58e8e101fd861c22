"""Three-phase submission workflow: pre-submission, sampled quality gate, evaluation.

State machine::

    received -> presubmitted -> gate_passed -> evaluated
                             -> gate_failed              (terminal)
    received -> rejected                                 (empty submission)
"""

from __future__ import annotations

import hashlib
import math
import random
import threading
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any

import numpy as np
from scipy.optimize import minimize_scalar

from philately.calculator import Calculator, CalculatorError
from philately.cif import CifError, parse_document, extract_structure
from philately.config import Config, ScoringConfig
from philately.crystal import CrystalError, Lattice, Structure, validate_structure
from philately.crystal.validity import ValidityCriteria, ValidityReport
from philately.fingerprint import fingerprint
from philately.hull import HullEntry, formation_energy_per_atom
from philately.relax import RelaxResult, RelaxSettings, relax_fire
from philately.serialize import structure_from_dict, structure_to_dict
from philately.store import DbRecord, Store

STATUSES = ("received", "presubmitted", "gate_passed", "gate_failed", "evaluated", "rejected")
TRANSITIONS = {
    "received": {"presubmitted", "rejected"},
    "presubmitted": {"gate_passed", "gate_failed"},
    "gate_passed": {"evaluated"},
    "gate_failed": set(),
    "evaluated": set(),
    "rejected": set(),
}
PARTIAL_OCCUPANCY = "partial occupancy unsupported"


class PipelineError(RuntimeError):
    pass


class EmptySubmission(PipelineError):
    pass


class InvalidTransition(PipelineError):
    def __init__(self, current: str, target: str) -> None:
        super().__init__(f"cannot move submission from {current!r} to {target!r}")
        self.current = current
        self.target = target


def now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="microseconds")


@dataclass
class Submission:
    id: str
    participant: str
    files: list[tuple[str, str]]
    received_at: str = field(default_factory=now_iso)
    status: str = "received"
    reports: list[dict[str, Any]] = field(default_factory=list)

    def advance(self, target: str) -> None:
        if target not in TRANSITIONS.get(self.status, ()):
            raise InvalidTransition(self.status, target)
        self.status = target

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "participant": self.participant,
            "files": [list(f) for f in self.files],
            "received_at": self.received_at,
            "status": self.status,
            "reports": list(self.reports),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Submission":
        return cls(d["id"], d["participant"], [tuple(f) for f in d["files"]], d["received_at"], d["status"],
                   list(d.get("reports", [])))


@dataclass
class Candidate:
    submission_id: str
    index: int
    filename: str = ""
    parsed: Structure | None = None
    relaxed: RelaxResult | None = None
    validity: ValidityReport | None = None
    e_hull: float | None = None
    score: float | None = None
    rejection_reason: str | None = None
    record_id: str | None = None
    canonical_of: str | None = None

    @property
    def id(self) -> str:
        return f"{self.submission_id}-{self.index:04d}"

    @property
    def rejected(self) -> bool:
        return self.rejection_reason is not None

    def to_dict(self) -> dict[str, Any]:
        """Persisted form: enough to resume evaluation after a restart."""
        d: dict[str, Any] = {
            "index": self.index,
            "filename": self.filename,
            "rejection_reason": self.rejection_reason,
            "parsed": structure_to_dict(self.parsed) if self.parsed is not None else None,
            "relaxed": None,
        }
        if self.relaxed is not None:
            r = self.relaxed
            d["relaxed"] = {
                "final": structure_to_dict(r.final),
                "converged": r.converged,
                "steps": r.steps,
                "energy_initial": r.energy_initial,
                "energy_final": r.energy_final,
                "max_force_final": r.max_force_final,
            }
        return d

    @classmethod
    def from_dict(cls, submission_id: str, d: dict[str, Any]) -> "Candidate":
        relaxed = None
        if d.get("relaxed") is not None:
            r = d["relaxed"]
            relaxed = RelaxResult(structure_from_dict(r["final"]), r["converged"], r["steps"],
                                  r["energy_initial"], r["energy_final"], r["max_force_final"])
        parsed = structure_from_dict(d["parsed"]) if d.get("parsed") is not None else None
        return cls(submission_id, d["index"], d.get("filename", ""), parsed, relaxed,
                   rejection_reason=d.get("rejection_reason"))

    def summary(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "filename": self.filename,
            "rejection_reason": self.rejection_reason,
            "converged": self.relaxed.converged if self.relaxed is not None else None,
            "valid": self.validity.passed if self.validity is not None else None,
            "failed_checks": self.validity.failed() if self.validity is not None else [],
            "e_hull": self.e_hull,
            "score": self.score,
            "record_id": self.record_id,
            "canonical_of": self.canonical_of,
        }


@dataclass(frozen=True)
class PhaseReport:
    phase: str
    parsed: int = 0
    failed: int = 0
    sampled: int = 0
    passed: int = 0
    decision: str | None = None
    sampled_indices: tuple[int, ...] = ()

    @property
    def pass_rate(self) -> float:
        return self.passed / self.sampled if self.sampled else 0.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "phase": self.phase, "parsed": self.parsed, "failed": self.failed, "sampled": self.sampled,
            "passed": self.passed, "pass_rate": self.pass_rate, "decision": self.decision,
            "sampled_indices": list(self.sampled_indices),
        }


@dataclass(frozen=True)
class ScoreRecord:
    submission_id: str
    participant: str
    submitted_at: str
    scores: dict[str, float]
    total: float
    novel_count: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "submission_id": self.submission_id, "participant": self.participant,
            "submitted_at": self.submitted_at, "scores": dict(self.scores), "total": self.total,
            "novel_count": self.novel_count,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ScoreRecord":
        return cls(d["submission_id"], d["participant"], d["submitted_at"], dict(d["scores"]),
                   float(d["total"]), int(d["novel_count"]))


# --- phase 1 -------------------------------------------------------------


def _prepare(sub_id: str, files: Sequence[tuple[str, str]], site_merge_tol: float, calc: Calculator,
             source: str) -> list[Candidate]:
    """Parse every file into candidates; one candidate per data block, one per unparseable file."""
    out: list[Candidate] = []
    for filename, text in files:
        try:
            blocks = parse_document(text).blocks
        except CifError as exc:
            out.append(Candidate(sub_id, len(out), filename, rejection_reason=f"parse error: {exc}"))
            continue
        for block in blocks:
            cand = Candidate(sub_id, len(out), filename)
            out.append(cand)
            try:
                s = extract_structure(block, site_merge_tol, source)
            except (CifError, CrystalError) as exc:
                cand.rejection_reason = f"parse error: {exc}"
                continue
            cand.parsed = s
            if any(o < 1.0 for o in s.occupancies):
                cand.rejection_reason = PARTIAL_OCCUPANCY
                continue
            missing = calc.unsupported(s.elements)
            if missing:
                cand.rejection_reason = f"unsupported elements: {', '.join(missing)}"
    return out


def _relax_one(cand: Candidate, calc: Calculator, settings: RelaxSettings) -> Candidate:
    if cand.rejected:
        return cand
    try:
        cand.relaxed = relax_fire(cand.parsed, calc, settings)
    except (CalculatorError, CrystalError) as exc:
        cand.rejection_reason = f"relaxation failed: {exc}"
    return cand


def run_presubmission(sub: Submission, calc: Calculator, settings: RelaxSettings | None = None,
                      site_merge_tol: float = 1e-3, workers: int = 1) -> tuple[list[Candidate], PhaseReport]:
    if sub.status != "received":
        raise InvalidTransition(sub.status, "presubmitted")
    if not sub.files:
        raise EmptySubmission(f"submission {sub.id} has no files")
    settings = settings or RelaxSettings()
    cands = _prepare(sub.id, sub.files, site_merge_tol, calc, sub.participant)
    if workers > 1 and calc.thread_safe:
        with ThreadPoolExecutor(workers) as pool:
            cands = list(pool.map(lambda c: _relax_one(c, calc, settings), cands))
    else:
        cands = [_relax_one(c, calc, settings) for c in cands]
    sub.advance("presubmitted")
    failed = sum(c.rejected for c in cands)
    return cands, PhaseReport("presubmission", parsed=len(cands) - failed, failed=failed)


# --- phase 2 -------------------------------------------------------------


def sample_indices(n: int, fraction: float, seed: int) -> tuple[int, ...]:
    if not (0 < fraction <= 1):
        raise ValueError("fraction must lie in (0, 1]")
    if n == 0:
        return ()
    k = min(n, max(1, math.ceil(fraction * n - 1e-12)))
    return tuple(sorted(random.Random(seed).sample(range(n), k)))


def gate_decision(valid: Sequence[bool], fraction: float, seed: int,
                  min_pass_rate: float) -> tuple[tuple[int, ...], int, bool]:
    """Pure gate: (sampled indices, number passing, pass?)."""
    idx = sample_indices(len(valid), fraction, seed)
    passed = sum(bool(valid[i]) for i in idx)
    # compare as exact counts so 3/10 against 0.3 is not lost to rounding
    ok = bool(idx) and passed >= min_pass_rate * len(idx) - 1e-9
    return idx, passed, ok


def _quality(cand: Candidate, criteria: ValidityCriteria | None) -> bool:
    if cand.rejected or cand.relaxed is None:
        return False
    if cand.validity is None:
        cand.validity = validate_structure(cand.relaxed.final, criteria)
    return cand.validity.passed


def run_sampling(candidates: Sequence[Candidate], fraction: float, min_pass_rate: float, seed: int,
                 criteria: ValidityCriteria | None = None,
                 sub: Submission | None = None) -> tuple[PhaseReport, bool]:
    if sub is not None and sub.status != "presubmitted":
        raise InvalidTransition(sub.status, "gate_passed")
    idx = sample_indices(len(candidates), fraction, seed)
    valid = [False] * len(candidates)
    for i in idx:
        valid[i] = _quality(candidates[i], criteria)
    _, passed, ok = gate_decision(valid, fraction, seed, min_pass_rate)
    if sub is not None:
        sub.advance("gate_passed" if ok else "gate_failed")
    report = PhaseReport("sampling", parsed=sum(not c.rejected for c in candidates),
                         failed=sum(c.rejected for c in candidates), sampled=len(idx), passed=passed,
                         decision="pass" if ok else "fail", sampled_indices=idx)
    return report, ok


# --- phase 3 -------------------------------------------------------------


def score_structure(e_hull: float, is_novel: bool, cfg: ScoringConfig | None = None,
                    formation_energy: float | None = None) -> float:
    cfg = cfg or ScoringConfig()
    if e_hull < -1e-9:
        raise ValueError("e_hull must be non-negative")
    if not is_novel:
        return 0.0
    if cfg.mode == "formation":
        if formation_energy is None:
            raise ValueError("formation scoring needs a formation energy")
        return max(0.0, min(1.0, -formation_energy / cfg.formation_scale))
    return max(0.0, 1.0 - max(e_hull, 0.0) / cfg.e_max)


def fcc_primitive(element: str, nn_distance: float) -> Structure:
    a = nn_distance * math.sqrt(2.0)
    m = 0.5 * a * np.array([[0.0, 1.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 0.0]])
    return Structure.from_arrays(Lattice(m), [element], [[0.0, 0.0, 0.0]], source="reference")


def reference_energy(calc: Calculator, element: str) -> float:
    """Energy per atom of the 1-atom fcc crystal at its optimal nearest-neighbour distance."""
    guess = getattr(calc, "reference_distance", None)
    d0 = float(guess(element)) if callable(guess) else 3.0
    res = minimize_scalar(lambda d: calc.evaluate(fcc_primitive(element, d)).energy,
                          bounds=(0.8 * d0, 1.3 * d0), method="bounded", options={"xatol": 1e-7})
    return float(res.fun)


def compute_reference_energies(calc: Calculator, elements) -> dict[str, float]:
    return {el: reference_energy(calc, el) for el in sorted(set(elements))}


def run_evaluation(candidates: Sequence[Candidate], sub: Submission, store: Store,
                   scoring: ScoringConfig | None = None, criteria: ValidityCriteria | None = None,
                   dedup_scope: str = "global") -> ScoreRecord:
    """Check, deduplicate, score and insert every candidate; safe to re-run after a crash."""
    if sub.status != "gate_passed":
        raise InvalidTransition(sub.status, "evaluated")
    scoring = scoring or ScoringConfig()
    scores: dict[str, float] = {}
    novel = 0
    for cand in candidates:
        if not _quality(cand, criteria):
            cand.score = 0.0
            scores[cand.id] = 0.0
            continue
        if cand.id in store:
            rec = store.get(cand.id)
        else:
            rec = _make_record(cand, sub, store, scoring, dedup_scope)
            store.insert_record(rec, dedup=False)
        cand.record_id, cand.canonical_of = rec.id, rec.canonical_of
        cand.e_hull, cand.score = rec.e_hull, rec.score
        scores[cand.id] = rec.score
        novel += rec.canonical_of is None
    total = math.fsum(scores.values())
    record = ScoreRecord(sub.id, sub.participant, sub.received_at, scores, total, novel)
    store.save_score(record.to_dict())
    sub.advance("evaluated")
    return record


def _make_record(cand: Candidate, sub: Submission, store: Store, scoring: ScoringConfig,
                 dedup_scope: str) -> DbRecord:
    final = cand.relaxed.final
    comp = final.composition()
    epa = cand.relaxed.energy_final / len(final.sites)
    fp = fingerprint(final)
    canon = store.find_canonical(final, fp, sub.id if dedup_scope == "submission" else None)
    entry = HullEntry.from_composition(cand.id, comp, epa, sub.participant)
    e_hull, _ = store.evaluate_hull(entry)
    e_form = formation_energy_per_atom(entry, store.refs)
    score = score_structure(e_hull, canon is None, scoring, e_form)
    sym = final.symmetry if final.symmetry is not None else (
        cand.parsed.symmetry if cand.parsed is not None else None)
    space_group = None
    wyckoff = None
    if sym is not None:
        if sym.space_group_symbol is not None or sym.space_group_number is not None:
            space_group = (sym.space_group_symbol, sym.space_group_number)
        wyckoff = sym.wyckoff
    return DbRecord(
        id=cand.id, structure=final, formula=comp.reduced_formula(), elements=tuple(sorted(comp.amounts)),
        energy_per_atom=epa, e_hull=e_hull, formation_energy=e_form, fingerprint=fp, source=sub.participant,
        submission_id=sub.id, score=score, canonical_of=canon, space_group=space_group, wyckoff=wyckoff,
    )


# --- coordinator -----------------------------------------------------------


def submission_seed(seed: int, submission_id: str) -> int:
    digest = hashlib.sha256(f"{seed}:{submission_id}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


class Pipeline:
    """Advances submissions through the phases; one coordinator per submission at a time."""

    def __init__(self, store: Store, calc: Calculator, config: Config | None = None) -> None:
        self.store = store
        self.calc = calc
        self.config = config or Config()
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()
        # dedup, hull evaluation and inserts must see each other's results in order
        self._eval_lock = threading.Lock()
        self._candidates: dict[str, list[Candidate]] = {}

    def _lock_for(self, sub_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(sub_id, threading.Lock())

    def _save(self, sub: Submission) -> None:
        self.store.save_submission(sub.to_dict())

    def load(self, sub_id: str) -> Submission:
        return Submission.from_dict(self.store.get_submission(sub_id))

    def candidates(self, sub_id: str) -> list[Candidate]:
        cached = self._candidates.get(sub_id)
        if cached is not None:
            return cached
        raw = self.store.get_candidates(sub_id)
        if raw is None:
            return []
        cands = [Candidate.from_dict(sub_id, d) for d in raw]
        # evaluation results live in the records and the score entry, not in the candidate list
        score = self.store.get_score(sub_id)
        for c in cands:
            if c.id in self.store:
                rec = self.store.get(c.id)
                c.record_id, c.canonical_of, c.e_hull = rec.id, rec.canonical_of, rec.e_hull
            if score is not None:
                c.score = score["scores"].get(c.id)
        self._candidates[sub_id] = cands
        return cands

    def submit(self, participant: str, files: Sequence[tuple[str, str]], submission_id: str | None = None,
               received_at: str | None = None) -> Submission:
        if not files:
            raise EmptySubmission("a submission needs at least one file")
        with self._locks_guard:
            sub_id = submission_id or f"S{len(self.store.submissions()) + 1:06d}"
            try:
                self.store.get_submission(sub_id)
            except KeyError:
                pass
            else:
                raise PipelineError(f"submission {sub_id} already exists")
            sub = Submission(sub_id, participant, [(str(n), str(t)) for n, t in files], received_at or now_iso())
            self._save(sub)
        return sub

    def presubmit(self, sub_id: str) -> PhaseReport:
        with self._lock_for(sub_id):
            sub = self.load(sub_id)
            cfg = self.config
            try:
                cands, report = run_presubmission(sub, self.calc, cfg.relax, cfg.cif.site_merge_tol, cfg.workers)
            except EmptySubmission:
                sub.advance("rejected")
                self._save(sub)
                raise
            self.store.save_candidates(sub_id, [c.to_dict() for c in cands])
            self._candidates[sub_id] = cands
            sub.reports.append(report.to_dict())
            self._save(sub)
            return report

    def sample(self, sub_id: str) -> PhaseReport:
        with self._lock_for(sub_id):
            sub = self.load(sub_id)
            s = self.config.sampling
            report, _ = run_sampling(self.candidates(sub_id), s.fraction, s.min_pass_rate,
                                     submission_seed(s.seed, sub_id), self.config.validity, sub)
            sub.reports.append(report.to_dict())
            self._save(sub)
            return report

    def _ensure_refs(self, cands: Sequence[Candidate]) -> None:
        needed = set()
        for c in cands:
            if c.relaxed is not None:
                needed.update(c.relaxed.final.elements)
        have = self.store.refs
        configured = {k: float(v) for k, v in self.config.hull.references.items() if k in needed and k not in have}
        computed = compute_reference_energies(self.calc, needed - set(have) - set(configured))
        missing = {**configured, **computed}
        if missing:
            self.store.set_refs(missing)

    def evaluate(self, sub_id: str) -> ScoreRecord:
        with self._lock_for(sub_id), self._eval_lock:
            sub = self.load(sub_id)
            if sub.status == "evaluated":
                score = self.store.get_score(sub_id)
                if score is not None:
                    return ScoreRecord.from_dict(score)
            if sub.status != "gate_passed":
                raise InvalidTransition(sub.status, "evaluated")
            cands = self.candidates(sub_id)
            self._ensure_refs(cands)
            record = run_evaluation(cands, sub, self.store, self.config.scoring, self.config.validity,
                                    self.config.dedup.scope)
            valid = sum(c.validity is not None and c.validity.passed for c in cands)
            sub.reports.append(PhaseReport("evaluation", parsed=sum(not c.rejected for c in cands),
                                           failed=sum(c.rejected for c in cands), sampled=len(cands),
                                           passed=valid).to_dict())
            self._save(sub)
            return record

    def process(self, sub_id: str) -> Submission:
        """Run every remaining phase; stops at a failed gate."""
        sub = self.load(sub_id)
        if sub.status == "received":
            self.presubmit(sub_id)
        sub = self.load(sub_id)
        if sub.status == "presubmitted":
            self.sample(sub_id)
        sub = self.load(sub_id)
        if sub.status == "gate_passed":
            self.evaluate(sub_id)
        return self.load(sub_id)

    def status(self, sub_id: str) -> dict[str, Any]:
        sub = self.load(sub_id)
        return {
            "id": sub.id,
            "participant": sub.participant,
            "received_at": sub.received_at,
            "status": sub.status,
            "reports": sub.reports,
            "candidates": [c.summary() for c in self.candidates(sub_id)],
            "score": self.store.get_score(sub_id),
        }
