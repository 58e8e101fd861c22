"""Configuration file loading. Every threshold the pipeline uses lives here.

Example (YAML; JSON is accepted too)::

    calculator:
      kind: lj              # lj | external
      cutoff: 10.0
      lj: {Ar: [0.0104, 3.40]}
      command: null         # external: worker command line
      elements: []          # external: supported elements
    relax: {fmax: 0.05, max_steps: 500, dt_start: 0.1, dt_max: 1.0, max_move: 0.2}
    validity: {d_min: 0.5, v_min: 1.0, v_max: 1000.0, n_max: 500}
    sampling: {fraction: 0.1, min_pass_rate: 0.3, seed: 0}
    scoring: {mode: e_hull, e_max: 0.1, formation_scale: 1.0}
    hull: {eps_hull: 1.0e-6, references: {}}
    dedup: {scope: global, ltol: 0.2, stol: 0.3, atol: 5.0}
    cif: {site_merge_tol: 0.001}
    store: {path: ./philately-store, snapshot_every: 200}
    server: {host: 127.0.0.1, port: 8000}
    workers: 1
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from philately.calculator import Calculator, LennardJones, LjParams, SubprocessCalculator
from philately.crystal.validity import ValidityCriteria
from philately.relax import RelaxSettings
from philately.calculator.lj import DEFAULT_LJ_TABLE


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class CalculatorConfig:
    kind: str = "lj"
    cutoff: float = 10.0
    lj: dict[str, tuple[float, float]] = field(default_factory=lambda: dict(DEFAULT_LJ_TABLE))
    command: str | None = None
    elements: tuple[str, ...] = ()


@dataclass(frozen=True)
class SamplingConfig:
    fraction: float = 0.1
    min_pass_rate: float = 0.3
    seed: int = 0


@dataclass(frozen=True)
class ScoringConfig:
    mode: str = "e_hull"  # e_hull | formation
    e_max: float = 0.1
    formation_scale: float = 1.0


@dataclass(frozen=True)
class HullConfig:
    eps_hull: float = 1e-6
    references: dict[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class DedupConfig:
    scope: str = "global"  # global | submission
    ltol: float = 0.2
    stol: float = 0.3
    atol: float = 5.0


@dataclass(frozen=True)
class CifConfig:
    site_merge_tol: float = 1e-3


@dataclass(frozen=True)
class StoreConfig:
    path: str = "./philately-store"
    snapshot_every: int = 200


@dataclass(frozen=True)
class ServerConfig:
    host: str = "127.0.0.1"
    port: int = 8000


@dataclass(frozen=True)
class Config:
    calculator: CalculatorConfig = field(default_factory=CalculatorConfig)
    relax: RelaxSettings = field(default_factory=RelaxSettings)
    validity: ValidityCriteria = field(default_factory=ValidityCriteria)
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    scoring: ScoringConfig = field(default_factory=ScoringConfig)
    hull: HullConfig = field(default_factory=HullConfig)
    dedup: DedupConfig = field(default_factory=DedupConfig)
    cif: CifConfig = field(default_factory=CifConfig)
    store: StoreConfig = field(default_factory=StoreConfig)
    server: ServerConfig = field(default_factory=ServerConfig)
    workers: int = 1

    def __post_init__(self) -> None:
        s = self.sampling
        if not (0 < s.fraction <= 1):
            raise ConfigError("sampling.fraction must lie in (0, 1]")
        if not (0 <= s.min_pass_rate <= 1):
            raise ConfigError("sampling.min_pass_rate must lie in [0, 1]")
        if self.scoring.mode not in ("e_hull", "formation"):
            raise ConfigError(f"unknown scoring.mode {self.scoring.mode!r}")
        if self.scoring.e_max <= 0 or self.scoring.formation_scale <= 0:
            raise ConfigError("scoring scales must be positive")
        if self.dedup.scope not in ("global", "submission"):
            raise ConfigError(f"unknown dedup.scope {self.dedup.scope!r}")
        if self.calculator.kind not in ("lj", "external"):
            raise ConfigError(f"unknown calculator.kind {self.calculator.kind!r}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    def build_calculator(self, allow_external: bool = True) -> Calculator:
        c = self.calculator
        if c.kind == "external":
            if not allow_external:
                raise ConfigError("external calculator not allowed here")
            if not c.command or not c.elements:
                raise ConfigError("external calculator needs `command` and `elements`")
            return SubprocessCalculator(c.command, c.elements)
        try:
            return LennardJones(LjParams({k: (float(v[0]), float(v[1])) for k, v in c.lj.items()}, c.cutoff))
        except (ValueError, TypeError, IndexError) as exc:
            raise ConfigError(f"bad LJ parameters: {exc}") from None


def _build(cls, data: Any, where: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping")
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(names))
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    kwargs = {}
    for key, value in data.items():
        if key == "allowed_elements":
            value = frozenset(value)
        elif key == "elements" and isinstance(value, list):
            value = tuple(value)
        elif key == "lj" and isinstance(value, dict):
            value = {k: tuple(v) for k, v in value.items()}
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


_SECTIONS = {
    "calculator": CalculatorConfig, "relax": RelaxSettings, "validity": ValidityCriteria,
    "sampling": SamplingConfig, "scoring": ScoringConfig, "hull": HullConfig, "dedup": DedupConfig,
    "cif": CifConfig, "store": StoreConfig, "server": ServerConfig,
}


def config_from_dict(data: dict | None) -> Config:
    data = dict(data or {})
    unknown = sorted(set(data) - set(_SECTIONS) - {"workers"})
    if unknown:
        raise ConfigError(f"unknown top-level keys {unknown}")
    kwargs: dict[str, Any] = {name: _build(cls, data.get(name), name) for name, cls in _SECTIONS.items()}
    if "workers" in data:
        kwargs["workers"] = int(data["workers"])
    return Config(**kwargs)


def load_config(path: str | Path | None = None) -> Config:
    if path is None:
        return Config()
    try:
        text = Path(path).read_text(encoding="utf-8")
        data = yaml.safe_load(text)
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return config_from_dict(data)
