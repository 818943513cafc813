"""Experiment config: one JSON document that drives every pipeline stage.

Unknown keys are errors at every level. Relative artifact paths resolve
against ``paths.out_dir``; the ``CHURNVEC_OUT_DIR`` environment variable,
when set, replaces ``out_dir`` (a ``--out`` flag replaces both).
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional, Union

from .eval import ComparisonConfig
from .features import DEFAULT_WINDOW, RATE_EPS
from .labels import HORIZON, QUIET_GAP, WARMUP_END
from .synthgen import CohortConfig

OUT_DIR_ENV = "CHURNVEC_OUT_DIR"


def _check_keys(name: str, d: dict, cls) -> None:
    if not isinstance(d, dict):
        raise TypeError(f"config section {name!r} must be an object")
    unknown = set(d) - {f.name for f in fields(cls)}
    if unknown:
        raise KeyError(f"unknown keys in {name}: {sorted(unknown)}")


@dataclass
class PathsConfig:
    out_dir: str = "out"
    events: str = "events.jsonl"
    ground_truth: str = "ground_truth.csv"
    features: str = "features.csv"
    labeled: str = "labeled.csv"


@dataclass
class FeatureConfig:
    window: int = DEFAULT_WINDOW
    rate_eps: float = RATE_EPS

    def validate(self) -> None:
        if self.window < 1:
            raise ValueError("features.window must be >= 1")
        if not self.rate_eps > 0:
            raise ValueError("features.rate_eps must be positive")


@dataclass
class LabelConfig:
    warmup_end: int = WARMUP_END
    horizon: int = HORIZON
    tau: Union[float, str] = "matched"
    quiet_gap: int = QUIET_GAP
    split_ratios: tuple = (0.8, 0.1, 0.1)

    def validate(self) -> None:
        if isinstance(self.tau, str):
            if self.tau != "matched":
                raise ValueError(f"labels.tau must be a number in [0, 1) or \"matched\", got {self.tau!r}")
        elif not 0 <= self.tau < 1:
            raise ValueError("labels.tau must lie in [0, 1)")
        if len(self.split_ratios) != 3:
            raise ValueError("labels.split_ratios needs three entries (train, validation, test)")


@dataclass
class ExperimentConfig:
    """``seed`` drives cohort generation and the user split; replicate seeds
    for the comparison live in ``comparison.seeds``."""

    seed: int = 0
    paths: PathsConfig = field(default_factory=PathsConfig)
    cohort: dict = field(default_factory=dict)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    labels: LabelConfig = field(default_factory=LabelConfig)
    comparison: ComparisonConfig = field(default_factory=ComparisonConfig)

    def cohort_config(self) -> CohortConfig:
        cfg = CohortConfig.from_dict({**self.cohort, "rng_seed": self.seed})
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if "rng_seed" in self.cohort:
            raise KeyError("cohort.rng_seed is not allowed; set the top-level seed")
        self.cohort_config()
        self.features.validate()
        self.labels.validate()
        self.comparison.validate()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["labels"]["split_ratios"] = list(self.labels.split_ratios)
        d["comparison"] = self.comparison.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        _check_keys("config", d, cls)
        d = dict(d)
        for name, sub in (("paths", PathsConfig), ("features", FeatureConfig), ("labels", LabelConfig)):
            if name in d:
                _check_keys(name, d[name], sub)
                d[name] = sub(**d[name])
        if "labels" in d:
            d["labels"].split_ratios = tuple(d["labels"].split_ratios)
        if "comparison" in d:
            d["comparison"] = ComparisonConfig.from_dict(d["comparison"])
        cfg = cls(**d)
        cfg.validate()
        return cfg

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    def out_dir(self, override: Optional[str] = None) -> Path:
        if override:
            return Path(override)
        return Path(os.environ.get(OUT_DIR_ENV) or self.paths.out_dir)

    def path(self, name: str, override: Optional[str] = None) -> Path:
        p = Path(getattr(self.paths, name))
        return p if p.is_absolute() else self.out_dir(override) / p


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: invalid JSON ({exc})") from None
    return ExperimentConfig.from_dict(d)
