"""Append-only record log with rebuildable indexes and periodic snapshots.

One writer (guarded by a lock) appends checksummed lines; the in-memory
indexes are derived state. Recovery loads the newest valid snapshot, replays
the log after it, and truncates any torn tail, so the recovered state always
equals replaying the intact log prefix.
"""

from __future__ import annotations

import copy
import json
import math
import os
import threading
import zlib
from collections.abc import Callable, Iterable
from dataclasses import replace
from pathlib import Path
from typing import Any

from philately.crystal.structure import parse_formula
from philately.elements import is_element
from philately.fingerprint import DEFAULT_ATOL, DEFAULT_LTOL, DEFAULT_STOL, structures_match
from philately.hull.phase import DEFAULT_EPS_HULL, HullEntry, HullIndex
from philately.store.records import (
    CorpusStats,
    DbRecord,
    LeaderboardRow,
    Query,
    decode_lines,
    encode_line,
)

LOG_NAME = "records.log"
SNAPSHOT_NAME = "snapshot.jsonl"


class StoreError(RuntimeError):
    pass


class BadQuery(ValueError):
    pass


def empty_state() -> dict[str, Any]:
    return {
        "records": {},
        "formula": {},
        "element": {},
        "source": {},
        "spacegroup": {},
        "bucket": {},
        "submissions": {},
        "scores": {},
        "candidates": {},
        "refs": {},
    }


def _bucket_key(formula: str, count: int) -> str:
    return f"{formula}|{count}"


def apply_entry(state: dict[str, Any], entry: dict[str, Any]) -> None:
    """Fold one log entry into the derived state (pure dict manipulation)."""
    kind = entry["kind"]
    data = entry["data"]
    if kind == "record":
        rid = data["id"]
        if rid in state["records"]:
            return
        state["records"][rid] = data
        state["formula"].setdefault(data["formula"], []).append(rid)
        for el in data["elements"]:
            state["element"].setdefault(el, []).append(rid)
        state["source"].setdefault(data["source"], []).append(rid)
        sg = data.get("space_group")
        if sg is not None and sg[1] is not None:
            state["spacegroup"].setdefault(str(sg[1]), []).append(rid)
        if data.get("canonical_of") is None:
            fp = data["fingerprint"]
            key = _bucket_key(fp["reduced_formula"], fp["primitive_site_count"])
            state["bucket"].setdefault(key, []).append(rid)
    elif kind == "submission":
        state["submissions"][data["id"]] = data
    elif kind == "score":
        state["scores"][data["submission_id"]] = data
    elif kind == "candidates":
        state["candidates"][data["submission_id"]] = data["candidates"]
    elif kind == "refs":
        state["refs"].update({k: float(v) for k, v in data.items()})
    else:
        raise StoreError(f"unknown log entry kind {kind!r}")


class Store:
    """Durable structure database. Pass ``path=None`` for a memory-only store."""

    def __init__(
        self,
        path: str | Path | None,
        refs: dict[str, float] | None = None,
        eps_hull: float = DEFAULT_EPS_HULL,
        snapshot_every: int = 200,
        fsync: bool = True,
        match_tolerances: tuple[float, float, float] = (DEFAULT_LTOL, DEFAULT_STOL, DEFAULT_ATOL),
    ) -> None:
        self.path = Path(path) if path is not None else None
        self.eps_hull = eps_hull
        self.snapshot_every = snapshot_every
        self.fsync = fsync
        self.match_tolerances = match_tolerances
        self.fault: Callable[[str], None] | None = None
        self._lock = threading.RLock()
        self._decoded: dict[str, DbRecord] = {}
        self._hull: HullIndex | None = None
        self._since_snapshot = 0
        self._dead = False
        self._state = empty_state()
        self._offset = 0
        if self.path is not None:
            self.path.mkdir(parents=True, exist_ok=True)
            self._recover()
        if refs:
            missing = {k: v for k, v in refs.items() if self._state["refs"].get(k) != v}
            if missing:
                self.set_refs(missing)

    # -- durability -------------------------------------------------------

    @property
    def log_path(self) -> Path:
        assert self.path is not None
        return self.path / LOG_NAME

    @property
    def snapshot_path(self) -> Path:
        assert self.path is not None
        return self.path / SNAPSHOT_NAME

    def _hook(self, point: str) -> None:
        if self.fault is not None:
            self.fault(point)

    def _load_snapshot(self, log_len: int, data: bytes) -> tuple[dict[str, Any], int] | None:
        # header line {"offset", "crc"} followed by the state JSON the crc covers
        try:
            raw = self.snapshot_path.read_bytes()
            nl = raw.index(b"\n")
            head = json.loads(raw[:nl])
            body = raw[nl + 1:]
            if zlib.crc32(body) != head["crc"]:
                return None
            offset = int(head["offset"])
            state = json.loads(body)
        except (OSError, ValueError, KeyError, TypeError):
            return None
        if offset > log_len or (offset > 0 and data[offset - 1:offset] != b"\n"):
            return None
        return state, offset

    def _recover(self) -> None:
        try:
            data = self.log_path.read_bytes()
        except FileNotFoundError:
            data = b""
        state, start = empty_state(), 0
        snap = self._load_snapshot(len(data), data)
        if snap is not None:
            state, start = snap
        entries, end = decode_lines(data[start:])
        for entry in entries:
            apply_entry(state, entry)
        valid = start + end
        if valid < len(data):
            with open(self.log_path, "r+b") as fh:
                fh.truncate(valid)
        self._state = state
        self._offset = valid
        self._decoded.clear()
        self._hull = None

    def _append(self, entry: dict[str, Any]) -> None:
        if self._dead:
            raise StoreError("store was interrupted mid-write; reopen it to recover")
        line = encode_line(entry)
        self._hook("append:before")
        try:
            if self.path is not None:
                try:
                    with open(self.log_path, "ab") as fh:
                        half = len(line) // 2
                        fh.write(line[:half])
                        fh.flush()
                        self._hook("append:partial")
                        fh.write(line[half:])
                        fh.flush()
                        if self.fsync:
                            os.fsync(fh.fileno())
                except OSError as exc:
                    self._truncate_to(self._offset)
                    raise StoreError(f"log append failed: {exc}") from exc
            self._hook("append:after")
        except StoreError:
            raise
        except BaseException:
            # an interruption here behaves like a process crash: the log may hold a
            # torn or unapplied line, so this instance refuses further writes
            self._dead = True
            raise
        apply_entry(self._state, entry)
        self._offset += len(line)
        self._since_snapshot += 1
        if self.path is not None and self.snapshot_every and self._since_snapshot >= self.snapshot_every:
            try:
                self.snapshot()
            except BaseException:
                self._dead = True
                raise

    def _truncate_to(self, offset: int) -> None:
        try:
            with open(self.log_path, "r+b") as fh:
                fh.truncate(offset)
        except OSError:
            pass

    def snapshot(self) -> None:
        """Persist the derived state atomically (temp file + rename)."""
        if self.path is None:
            return
        with self._lock:
            body = json.dumps(self._state, sort_keys=True, separators=(",", ":")).encode()
            head = json.dumps({"offset": self._offset, "crc": zlib.crc32(body)}).encode()
            tmp = self.snapshot_path.with_suffix(".tmp")
            with open(tmp, "wb") as fh:
                fh.write(head + b"\n" + body)
                fh.flush()
                if self.fsync:
                    os.fsync(fh.fileno())
            self._hook("snapshot:before_replace")
            os.replace(tmp, self.snapshot_path)
            self._since_snapshot = 0

    def state_copy(self) -> dict[str, Any]:
        """Deep copy of the derived state (for audits and tests)."""
        with self._lock:
            # the state is plain JSON data; a round trip is a much faster deep copy
            return json.loads(json.dumps(self._state))

    # -- records ----------------------------------------------------------

    def __len__(self) -> int:
        return len(self._state["records"])

    def __contains__(self, record_id: str) -> bool:
        return record_id in self._state["records"]

    def get(self, record_id: str) -> DbRecord:
        with self._lock:
            rec = self._decoded.get(record_id)
            if rec is None:
                raw = self._state["records"].get(record_id)
                if raw is None:
                    raise KeyError(record_id)
                rec = DbRecord.from_dict(raw)
                self._decoded[record_id] = rec
            return rec

    def ids(self) -> list[str]:
        with self._lock:
            return list(self._state["records"])

    def find_canonical(self, rec_or_structure, fingerprint=None, submission_id: str | None = None) -> str | None:
        """Earliest canonical record matching the structure, optionally limited to one submission."""
        if isinstance(rec_or_structure, DbRecord):
            structure, fingerprint = rec_or_structure.structure, rec_or_structure.fingerprint
        else:
            structure = rec_or_structure
        key = _bucket_key(fingerprint.reduced_formula, fingerprint.primitive_site_count)
        with self._lock:
            bucket = list(self._state["bucket"].get(key, ()))
        ltol, stol, atol = self.match_tolerances
        for rid in bucket:
            other = self.get(rid)
            if submission_id is not None and other.submission_id != submission_id:
                continue
            if structures_match(structure, other.structure, ltol, stol, atol):
                return rid
        return None

    def insert_record(self, rec: DbRecord, dedup: bool = True, dedup_submission: str | None = None) -> str:
        """Append a record; duplicates are stored with `canonical_of` pointing at the canonical record."""
        with self._lock:
            existing = self._state["records"].get(rec.id)
            if existing is not None:
                return rec.id
            if rec.canonical_of is None and dedup:
                canon = self.find_canonical(rec, submission_id=dedup_submission)
                if canon is not None:
                    rec = replace(rec, canonical_of=canon, score=0.0)
            if rec.canonical_of is not None:
                target = self._state["records"].get(rec.canonical_of)
                if target is None:
                    raise StoreError(f"canonical record {rec.canonical_of} does not exist")
                if target.get("canonical_of") is not None:
                    rec = replace(rec, canonical_of=target["canonical_of"])
            if self._hull is not None:
                missing = [el for el in rec.elements if el not in self._state["refs"]]
                if missing:
                    raise StoreError(f"no reference energy for {missing}")
            self._append({"kind": "record", "data": rec.to_dict()})
            self._decoded[rec.id] = rec
            if self._hull is not None:
                self._hull.add(self._hull_entry(rec), member=rec.is_canonical)
            return rec.id

    # -- hull -------------------------------------------------------------

    @property
    def refs(self) -> dict[str, float]:
        return dict(self._state["refs"])

    def set_refs(self, refs: dict[str, float]) -> None:
        with self._lock:
            changed = any(k in self._state["refs"] and self._state["refs"][k] != v for k, v in refs.items())
            self._append({"kind": "refs", "data": {k: float(v) for k, v in refs.items()}})
            if changed:
                self._hull = None
            elif self._hull is not None:
                self._hull.refs.update(refs)

    @staticmethod
    def _hull_entry(rec: DbRecord) -> HullEntry:
        return HullEntry.from_composition(rec.id, rec.structure.composition(), rec.energy_per_atom, rec.source)

    def hull(self) -> HullIndex:
        with self._lock:
            if self._hull is None:
                index = HullIndex(self._state["refs"], self.eps_hull)
                records = [self.get(rid) for rid in self._state["records"]]
                for rec in records:
                    if rec.is_canonical:
                        index.add(self._hull_entry(rec), member=True)
                for rec in records:
                    if not rec.is_canonical:
                        index.add(self._hull_entry(rec), member=False)
                self._hull = index
            return self._hull

    def current_e_hull(self, record_id: str) -> float:
        return self.hull().current[record_id]

    def evaluate_hull(self, entry: HullEntry):
        with self._lock:
            return self.hull().evaluate(entry)

    # -- submissions & scores --------------------------------------------

    def save_submission(self, data: dict[str, Any]) -> None:
        with self._lock:
            self._append({"kind": "submission", "data": data})

    def get_submission(self, submission_id: str) -> dict[str, Any]:
        with self._lock:
            sub = self._state["submissions"].get(submission_id)
            if sub is None:
                raise KeyError(submission_id)
            return copy.deepcopy(sub)

    def submissions(self) -> list[dict[str, Any]]:
        with self._lock:
            return copy.deepcopy(list(self._state["submissions"].values()))

    def save_score(self, data: dict[str, Any]) -> None:
        with self._lock:
            self._append({"kind": "score", "data": data})

    def save_candidates(self, submission_id: str, candidates: list[dict[str, Any]]) -> None:
        with self._lock:
            self._append({"kind": "candidates", "data": {"submission_id": submission_id, "candidates": candidates}})

    def get_candidates(self, submission_id: str) -> list[dict[str, Any]] | None:
        with self._lock:
            c = self._state["candidates"].get(submission_id)
            return copy.deepcopy(c) if c is not None else None

    def get_score(self, submission_id: str) -> dict[str, Any] | None:
        with self._lock:
            s = self._state["scores"].get(submission_id)
            return copy.deepcopy(s) if s is not None else None

    def scores(self) -> list[dict[str, Any]]:
        with self._lock:
            return copy.deepcopy(list(self._state["scores"].values()))

    # -- queries ----------------------------------------------------------

    def query_records(self, q: Query) -> tuple[list[DbRecord], int]:
        """Conjunctive filter; ordered by current e_above_hull, then id."""
        for el in q.elements:
            if not is_element(el):
                raise BadQuery(f"unknown element {el!r}")
        formula = None
        if q.formula is not None:
            try:
                comp = parse_formula(q.formula)
            except ValueError as exc:
                raise BadQuery(str(exc)) from None
            if not all(is_element(el) for el in comp.amounts):
                raise BadQuery(f"unknown element in formula {q.formula!r}")
            formula = comp.reduced_formula()
        if q.offset < 0 or q.limit < 0:
            raise BadQuery("offset and limit must be non-negative")
        if q.max_ehull is not None and not math.isfinite(q.max_ehull):
            raise BadQuery("max_ehull must be finite")

        with self._lock:
            st = self._state
            sets: list[Iterable[str]] = []
            if formula is not None:
                sets.append(st["formula"].get(formula, ()))
            for el in q.elements:
                sets.append(st["element"].get(el, ()))
            if q.source is not None:
                sets.append(st["source"].get(q.source, ()))
            if q.space_group is not None:
                sets.append(st["spacegroup"].get(str(q.space_group), ()))
            if sets:
                ids = set(sets[0])
                for s in sets[1:]:
                    ids &= set(s)
            else:
                ids = set(st["records"])
            raw = st["records"]
            if q.canonical_only:
                ids = {i for i in ids if raw[i].get("canonical_of") is None}
            if q.wyckoff:
                want = set(q.wyckoff)
                ids = {i for i in ids if raw[i].get("wyckoff") and want <= set(raw[i]["wyckoff"])}
            current = self.hull().current
            if q.max_ehull is not None:
                bound = q.max_ehull + self.eps_hull
                ids = {i for i in ids if current[i] <= bound}
            ordered = sorted(ids, key=lambda i: (current[i], i))
            page = ordered[q.offset:q.offset + q.limit]
            return [self.get(i) for i in page], len(ordered)

    def leaderboard(self, start: str | None = None, end: str | None = None) -> list[LeaderboardRow]:
        """Per-participant totals over score records submitted within [start, end] (ISO timestamps)."""
        totals: dict[str, list] = {}
        for s in self.scores():
            t = s["submitted_at"]
            if (start is not None and t < start) or (end is not None and t > end):
                continue
            row = totals.setdefault(s["participant"], [0.0, 0, t])
            row[0] += s["total"]
            row[1] += s["novel_count"]
            row[2] = min(row[2], t)
        rows = [LeaderboardRow(p, v[0], v[1], v[2]) for p, v in totals.items()]
        rows.sort(key=lambda r: (-r.total_score, r.first_submission, r.participant))
        return rows

    def summarize_corpus(self, bin_width: float = 0.1) -> CorpusStats:
        if bin_width <= 0:
            raise BadQuery("bin width must be positive")
        with self._lock:
            canon = [r for r in self._state["records"].values() if r.get("canonical_of") is None]
            current = self.hull().current if canon else {}
        elements: dict[str, int] = {}
        groups: dict[str, int] = {}
        bins: dict[int, int] = {}
        for r in canon:
            for el in r["elements"]:
                elements[el] = elements.get(el, 0) + 1
            sg = r.get("space_group")
            key = str(sg[1]) if sg is not None and sg[1] is not None else "unknown"
            groups[key] = groups.get(key, 0) + 1
            k = math.floor(current[r["id"]] / bin_width + 1e-9)
            bins[k] = bins.get(k, 0) + 1
        hist = [
            {"lo": round(k * bin_width, 12), "hi": round((k + 1) * bin_width, 12), "count": bins[k]}
            for k in sorted(bins)
        ]
        return CorpusStats(len(canon), dict(sorted(elements.items())), dict(sorted(groups.items())), hist, bin_width)

    def write_stats(self, path: str | Path, bin_width: float = 0.1) -> CorpusStats:
        stats = self.summarize_corpus(bin_width)
        Path(path).write_text(json.dumps(stats.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return stats
