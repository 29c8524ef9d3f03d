"""Run configuration: a JSON document mirrored by command-line flags.

Every section is a flat mapping; unknown keys anywhere are rejected.
The fully resolved configuration is written next to each run's outputs
and can be passed back with ``--config`` to repeat the run.
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

from .adaptive import AdaptiveConfig
from .data import DEFAULT_LABEL, PrepConfig
from .errors import ConfigError
from .evaluation import DEFAULT_GRID, DEFAULT_LEARNERS, PipelineConfig
from .learners import CONFIG_TYPES

SEED_ENV = "CHOQUET_FUSE_SEED"


@dataclass
class SyntheticSection:
    n: int = 10_000
    d: int = 12
    default_rate: float = 0.183
    class_separation: float = 1.0
    complementary_views: int = 3


@dataclass
class DataSection:
    path: str | None = None
    label_column: str = DEFAULT_LABEL
    prepped: bool = False


@dataclass
class PipelineSection:
    learners: list = field(default_factory=lambda: list(DEFAULT_LEARNERS))
    use_views: bool = False
    table_source: str = "train"
    calibration_fraction: float = 0.3
    positive_class: int = 1


@dataclass
class GridSection:
    w1: list = field(default_factory=lambda: list(DEFAULT_GRID))
    w2: list = field(default_factory=lambda: list(DEFAULT_GRID))


@dataclass
class RunConfig:
    command: str | None = None
    seed: int | None = None
    folds: int = 5
    workers: int | None = None
    out_dir: str = "out"
    model: str | None = None
    predictions: str | None = None
    calibration_predictions: str | None = None
    data: DataSection = field(default_factory=DataSection)
    prep: dict = field(default_factory=lambda: asdict(PrepConfig()))
    synthetic: SyntheticSection = field(default_factory=SyntheticSection)
    pipeline: PipelineSection = field(default_factory=PipelineSection)
    adaptive: dict = field(default_factory=lambda: asdict(AdaptiveConfig()))
    learner_configs: dict = field(
        default_factory=lambda: {k: asdict(t()) for k, t in CONFIG_TYPES.items()})
    grid: GridSection = field(default_factory=GridSection)

    # ---- typed views -------------------------------------------------

    def prep_config(self) -> PrepConfig:
        return PrepConfig(**self.prep)

    def adaptive_config(self) -> AdaptiveConfig:
        return AdaptiveConfig(**self.adaptive)

    def pipeline_config(self) -> PipelineConfig:
        p = self.pipeline
        learner_cfgs = {k: CONFIG_TYPES[k](**v) for k, v in self.learner_configs.items()}
        return PipelineConfig(tuple(p.learners), learner_cfgs, self.adaptive_config(),
                              p.use_views, p.table_source, p.calibration_fraction, p.positive_class)

    def validate(self) -> "RunConfig":
        if self.folds < 2:
            raise ConfigError(f"folds must be at least 2, got {self.folds}")
        if self.workers is not None and self.workers < 1:
            raise ConfigError("workers must be positive")
        self.prep_config()
        self.pipeline_config()
        return self

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


_SECTIONS = {"data": DataSection, "synthetic": SyntheticSection,
             "pipeline": PipelineSection, "grid": GridSection}


def _merge_flat(target: dict, updates: dict, where: str, allowed) -> dict:
    unknown = sorted(set(updates) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    merged = dict(target)
    merged.update(updates)
    return merged


def from_dict(doc: dict[str, Any]) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a JSON object")
    cfg = RunConfig()
    top = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(doc) - top)
    if unknown:
        raise ConfigError(f"unknown configuration key(s): {', '.join(unknown)}")
    for key, value in doc.items():
        if key in _SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"section {key!r} must be an object")
            section = _SECTIONS[key]
            names = {f.name for f in fields(section)}
            merged = _merge_flat(asdict(getattr(cfg, key)), value, key, names)
            setattr(cfg, key, section(**merged))
        elif key in ("prep", "adaptive"):
            if not isinstance(value, dict):
                raise ConfigError(f"section {key!r} must be an object")
            setattr(cfg, key, _merge_flat(getattr(cfg, key), value, key, getattr(cfg, key)))
        elif key == "learner_configs":
            if not isinstance(value, dict):
                raise ConfigError("learner_configs must be an object")
            merged = dict(cfg.learner_configs)
            for kind, params in value.items():
                if kind not in CONFIG_TYPES:
                    raise ConfigError(f"unknown learner kind {kind!r} in learner_configs")
                merged[kind] = _merge_flat(merged[kind], params, f"learner_configs.{kind}", merged[kind])
            cfg.learner_configs = merged
        else:
            setattr(cfg, key, value)
    try:
        return cfg.validate()
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load(path) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    return from_dict(doc)


def resolve_seed(flag: int | None, cfg: RunConfig) -> int:
    if flag is not None:
        return int(flag)
    if cfg.seed is not None:
        return int(cfg.seed)
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return 0
