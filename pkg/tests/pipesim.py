"""Crash-and-resume driver for the evaluation phase."""

from __future__ import annotations

import shutil
from pathlib import Path

from builders import submission_fixture

from philately.calculator import LennardJones
from philately.config import Config, HullConfig
from philately.pipeline import Pipeline, compute_reference_energies
from philately.store import Store

RECEIVED_AT = "2024-05-01T00:00:00+00:00"


class Crash(Exception):
    pass


def open_pipeline(root: Path, config: Config | None = None, snapshot_every: int = 3) -> Pipeline:
    return Pipeline(Store(root, snapshot_every=snapshot_every, fsync=False), LennardJones(), config)


def fixture_config() -> Config:
    """Default config with the reference energies precomputed, so resumed runs stay cheap.

    Evaluation still writes the references to the store, so crashes around that write are covered.
    """
    refs = compute_reference_energies(LennardJones(), ("Ar", "Kr", "Xe"))
    return Config(hull=HullConfig(references=refs))


def prepare(root: Path, config: Config) -> str:
    """Store at `root` holding the fixture submission, gate passed and not yet evaluated."""
    p = open_pipeline(root, config)
    sub = p.submit("alice", submission_fixture(), received_at=RECEIVED_AT)
    p.presubmit(sub.id)
    p.sample(sub.id)
    assert p.load(sub.id).status == "gate_passed"
    return sub.id


def count_hooks(base: Path, scratch: Path, sub_id: str, config: Config) -> tuple[int, dict]:
    """Hook calls made by one clean evaluation, and the state it leaves."""
    copy_store(base, scratch)
    p = open_pipeline(scratch, config)
    calls = []
    p.store.fault = calls.append
    p.evaluate(sub_id)
    return len(calls), p.store.state_copy()


def crash_then_resume(base: Path, scratch: Path, sub_id: str, crash_at: int, config: Config) -> dict:
    """Evaluate, crash at the `crash_at`-th hook call, reopen, evaluate again; returns the state."""
    copy_store(base, scratch)
    p = open_pipeline(scratch, config)
    seen = [0]

    def fault(point: str) -> None:
        if seen[0] == crash_at:
            raise Crash(point)
        seen[0] += 1

    p.store.fault = fault
    try:
        p.evaluate(sub_id)
    except Crash:
        pass
    else:
        raise AssertionError(f"hook {crash_at} was never reached")
    resumed = open_pipeline(scratch, config)
    resumed.evaluate(sub_id)
    assert resumed.load(sub_id).status == "evaluated"
    return resumed.store.state_copy()


def copy_store(src: Path, dst: Path) -> None:
    if dst.exists():
        shutil.rmtree(dst)
    shutil.copytree(src, dst)
