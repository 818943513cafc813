"""Metrics, the day-vs-vector comparison grid, and report output.

The grid crosses every estimator family with both target encodings (days
remaining, churn vector) and both tasks (regression, classification). Each
cell is tuned on train/validation, refit on train and scored on test, once
per replicate seed; the reported value is the median over replicates.
"""
from __future__ import annotations

import contextlib
import hashlib
import json
import time
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from . import hpo
from .features import FeatureStats, compute_stats, group_rows, standardize_array, window_arrays
from .labels import LabeledExample, Split, Target, matched_vector_threshold, relabel_vector
from .models import FAMILY_ORDER, EstimatorSpec, Family, Task, fit, predict

# ---------------------------------------------------------------- metrics


class UndefinedMetric(ValueError):
    """A metric has no value for these inputs (e.g. R^2 of a constant truth)."""


def _pair(y_true, y_pred, min_len):
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise ValueError(f"need equal-length 1-D inputs, got {y_true.shape} and {y_pred.shape}")
    if len(y_true) < min_len:
        raise ValueError(f"need at least {min_len} values, got {len(y_true)}")
    return y_true, y_pred


def mse(y_true, y_pred) -> float:
    y_true, y_pred = _pair(y_true, y_pred, 1)
    return float(np.mean((y_true - y_pred) ** 2))


def r2_score(y_true, y_pred) -> float:
    y_true, y_pred = _pair(y_true, y_pred, 2)
    ss_tot = float(np.sum((y_true - y_true.mean()) ** 2))
    if ss_tot == 0.0:
        raise UndefinedMetric("R^2 is undefined when the truth has zero variance")
    return 1.0 - float(np.sum((y_true - y_pred) ** 2)) / ss_tot


def accuracy(y_true, y_pred) -> float:
    y_true, y_pred = _pair(y_true, y_pred, 1)
    return float(np.mean(y_true == y_pred))


def roc_auc(y_true, scores) -> float:
    """Area under the ROC curve via the rank-sum statistic (ties get half credit)."""
    y_true, scores = _pair(y_true, scores, 2)
    pos = y_true == 1
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetric("AUC needs both classes")
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(len(scores))
    s = scores[order]
    # average ranks over tied groups
    start = 0
    for end in np.append(np.flatnonzero(np.diff(s) != 0) + 1, len(s)):
        ranks[order[start:end]] = 0.5 * (start + end - 1) + 1.0
        start = end
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def f1_score(y_true, y_pred) -> float:
    y_true, y_pred = _pair(y_true, y_pred, 1)
    tp = float(np.sum((y_true == 1) & (y_pred == 1)))
    denom = float(np.sum(y_true == 1) + np.sum(y_pred == 1))
    return 2.0 * tp / denom if denom > 0 else 0.0


@dataclass(frozen=True)
class MetricSet:
    """Test metrics of one fitted model. Regression fills r2/mse/variance;
    classification fills accuracy and the auxiliary auc/f1."""

    n_examples: int
    r2: Optional[float] = None
    mse: Optional[float] = None
    variance: Optional[float] = None
    accuracy: Optional[float] = None
    auc: Optional[float] = None
    f1: Optional[float] = None

    def __post_init__(self):
        if self.r2 is not None and self.r2 > 1.0:
            raise ValueError(f"r2 {self.r2} > 1")
        if self.mse is not None and self.mse < 0.0:
            raise ValueError("negative mse")
        if self.accuracy is not None and not 0.0 <= self.accuracy <= 1.0:
            raise ValueError(f"accuracy {self.accuracy} outside [0, 1]")

    def primary(self, task: Task) -> float:
        return self.r2 if task is Task.REGRESSION else self.accuracy


def regression_metrics(y_true, y_pred) -> MetricSet:
    y_true, y_pred = _pair(y_true, y_pred, 2)
    return MetricSet(len(y_true), r2=r2_score(y_true, y_pred), mse=mse(y_true, y_pred),
                     variance=float(np.var(y_true)))


def classification_metrics(y_true, prob, classes) -> MetricSet:
    y_true = np.asarray(y_true, dtype=float)
    try:
        auc = roc_auc(y_true, prob)
    except UndefinedMetric:
        auc = None
    return MetricSet(len(y_true), accuracy=accuracy(y_true, classes), auc=auc, f1=f1_score(y_true, classes))


def median_metrics(sets: Sequence[MetricSet]) -> MetricSet:
    """Field-wise median over replicates. The test set is shared, so
    ``variance`` is constant and R^2 stays affine in mse."""
    def med(name):
        vals = [getattr(m, name) for m in sets]
        if any(v is None for v in vals):
            return None
        return float(np.median(vals))
    return MetricSet(sets[0].n_examples, *(med(k) for k in ("r2", "mse", "variance", "accuracy", "auc", "f1")))


# ---------------------------------------------------------------- dataset


@dataclass
class SplitData:
    users: np.ndarray
    days: np.ndarray
    tabular: np.ndarray
    windows: np.ndarray
    mask: np.ndarray
    remain_days: np.ndarray
    churn_vector: np.ndarray
    cls_day: np.ndarray
    cls_vector: np.ndarray

    def __len__(self):
        return len(self.users)

    def target(self, target: Target, task: Task) -> np.ndarray:
        if task is Task.REGRESSION:
            return self.remain_days if target is Target.DAY else self.churn_vector
        return self.cls_day if target is Target.DAY else self.cls_vector

    def inputs(self, family: Family, rows=None):
        sel = slice(None) if rows is None else rows
        if family.sequence:
            return self.windows[sel], self.mask[sel]
        return self.tabular[sel]


class ChurnDataset:
    """Uncensored labeled examples split by user, with standardized inputs.

    Split arrays are reached only through ``split()``, which counts rows
    handed out per (phase, split) so tests can prove tuning never read the
    test split.
    """

    def __init__(self, splits: dict, stats: FeatureStats, tau: float, window: int, fingerprint: str):
        self._splits = splits
        self.stats = stats
        self.tau = tau
        self.window = window
        self.fingerprint = fingerprint
        self.access = Counter()
        self.phase = "idle"

    @contextlib.contextmanager
    def in_phase(self, phase: str):
        prev, self.phase = self.phase, phase
        try:
            yield self
        finally:
            self.phase = prev

    def split(self, split: Split) -> SplitData:
        data = self._splits[split]
        self.access[(self.phase, split.value)] += len(data)
        return data

    def sizes(self) -> dict:
        return {s.value: len(d) for s, d in self._splits.items()}


def dataset_fingerprint(examples: Sequence[LabeledExample], window: int, tau: float) -> str:
    h = hashlib.sha256()
    h.update(f"window={window};tau={tau!r}\n".encode())
    for e in examples:
        lab = e.label
        h.update(f"{lab.user_id},{lab.observation_day},{e.split.value},{lab.remain_days},"
                 f"{lab.lifetime_days},{int(lab.censored)}\n".encode())
        h.update(np.ascontiguousarray(e.features.values, dtype="<f8").tobytes())
    return h.hexdigest()


def prepare_dataset(examples: Sequence[LabeledExample], feature_rows: Iterable, window: int = 20,
                    tau: Union[float, str] = "matched") -> ChurnDataset:
    """Build split arrays from split-tagged examples and the full feature rows.

    ``tau="matched"`` picks the vector threshold whose training positive rate
    equals the day labels' (see ``labels.matched_vector_threshold``).
    Censored examples are dropped. Standardization stats come from the
    training split only.
    """
    examples = list(examples)
    if any(e.split is None for e in examples):
        raise ValueError("every example needs a split tag")
    if tau == "matched":
        tau = matched_vector_threshold(examples, Split.TRAIN)
    tau = float(tau)
    examples = relabel_vector(examples, tau)
    grouped = group_rows(feature_rows)
    kept = [e for e in examples if not e.label.censored]
    raw = {}
    for split in Split:
        ex = [e for e in kept if e.split is split]
        if not ex:
            raise ValueError(f"split {split.value} has no uncensored examples")
        keys = [(e.user_id, e.day) for e in ex]
        W, M = window_arrays(grouped, keys, window)
        raw[split] = (ex, np.stack([e.features.values for e in ex]), W, M)
    stats = compute_stats(raw[Split.TRAIN][1])
    splits = {}
    for split, (ex, tab, W, M) in raw.items():
        splits[split] = SplitData(
            users=np.array([e.user_id for e in ex]), days=np.array([e.day for e in ex]),
            tabular=standardize_array(tab, stats), windows=standardize_array(W, stats, M), mask=M,
            remain_days=np.array([e.label.remain_days for e in ex], dtype=float),
            churn_vector=np.array([e.label.churn_vector for e in ex]),
            cls_day=np.array([e.label.churned_within_horizon for e in ex], dtype=float),
            cls_vector=np.array([e.label.vector_below_threshold for e in ex], dtype=float),
        )
    return ChurnDataset(splits, stats, tau, window, dataset_fingerprint(examples, window, tau))


# ---------------------------------------------------------------- search spaces

def _net_space(size_name, lo, hi):
    return hpo.SearchSpace((hpo.integer(size_name, lo, hi, log=True),
                            hpo.uniform("lr", 1e-3, 1e-2, log=True),
                            hpo.integer("epochs", 5, 30)))


SEARCH_SPACES = {
    Family.LASSO: hpo.SearchSpace((hpo.uniform("lam", 1e-4, 1.0, log=True),)),
    Family.LINEAR_SVM: hpo.SearchSpace((hpo.uniform("C", 1e-2, 1e2, log=True),
                                        hpo.uniform("epsilon", 0.0, 0.5))),
    Family.DECISION_TREE: hpo.SearchSpace((hpo.integer("max_depth", 2, 12),
                                           hpo.integer("min_leaf", 1, 100, log=True))),
    Family.RANDOM_FOREST: hpo.SearchSpace((hpo.integer("max_depth", 3, 14),
                                           hpo.integer("min_leaf", 1, 50, log=True),
                                           hpo.uniform("feature_subsample", 0.2, 1.0))),
    Family.GBM: hpo.SearchSpace((hpo.integer("n_rounds", 20, 150),
                                 hpo.uniform("learning_rate", 0.02, 0.3, log=True),
                                 hpo.integer("max_depth", 2, 5))),
    Family.MLP: hpo.SearchSpace((hpo.integer("hidden", 16, 128, log=True),
                                 hpo.integer("n_layers", 1, 3),
                                 hpo.uniform("lr", 1e-3, 1e-2, log=True),
                                 hpo.integer("epochs", 5, 30))),
    Family.CNN1D: _net_space("filters", 8, 32),
    Family.RNN: _net_space("hidden", 8, 32),
    Family.LSTM: _net_space("hidden", 8, 32),
    Family.ATTENTION_NET: _net_space("hidden", 8, 32),
}


# ---------------------------------------------------------------- comparison


@dataclass
class ComparisonConfig:
    families: tuple = tuple(f.value for f in FAMILY_ORDER)
    seeds: tuple = (0, 1, 2, 3, 4)
    budget: int = 6
    n_init: int = 4
    optimizer: str = "bayes"
    max_train_examples: int = 2000
    max_tune_examples: int = 2000
    max_validation_examples: int = 600
    hyperparameters: dict = field(default_factory=dict)

    def validate(self) -> None:
        for f in self.families:
            Family.parse(f)
        if not self.seeds:
            raise ValueError("need at least one seed")
        if self.optimizer not in ("bayes", "random", "none"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}; valid: bayes, random, none")
        if self.optimizer == "bayes" and self.budget < self.n_init:
            raise ValueError(f"budget {self.budget} < n_init {self.n_init}")
        if self.budget < 1 and self.optimizer != "none":
            raise ValueError("budget must be >= 1")
        for k in ("max_train_examples", "max_tune_examples", "max_validation_examples"):
            if getattr(self, k) < 2:
                raise ValueError(f"{k} must be >= 2")
        for fam in self.hyperparameters:
            Family.parse(fam)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["families"] = list(self.families)
        d["seeds"] = list(self.seeds)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ComparisonConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise KeyError(f"unknown comparison keys {sorted(unknown)}")
        d = dict(d)
        for k in ("families", "seeds"):
            if k in d:
                d[k] = tuple(d[k])
        cfg = cls(**d)
        cfg.validate()
        return cfg


@dataclass
class CellResult:
    family: str
    target: str
    task: str
    metrics: Optional[MetricSet]
    best_params: Optional[dict]
    seed_metrics: list = field(default_factory=list)
    seed_params: list = field(default_factory=list)
    skipped: str = ""

    @property
    def key(self) -> tuple:
        return (self.family, self.target, self.task)

    def value(self) -> Optional[float]:
        if self.metrics is None:
            return None
        return self.metrics.primary(Task(self.task))


@dataclass
class ComparisonReport:
    cells: list
    seeds: tuple
    fingerprint: str
    tau: float
    config: dict = field(default_factory=dict)
    access: dict = field(default_factory=dict)

    def cell(self, family, target, task) -> CellResult:
        key = (Family.parse(family).value if isinstance(family, str) else family.value,
               target.value if isinstance(target, Target) else target,
               Task.parse(task).value if isinstance(task, str) else task.value)
        for c in self.cells:
            if c.key == key:
                return c
        raise KeyError(key)

    def to_dict(self) -> dict:
        return {
            "fingerprint": self.fingerprint, "tau": self.tau, "seeds": list(self.seeds),
            "config": self.config, "access": self.access,
            "cells": [{
                "family": c.family, "target": c.target, "task": c.task, "skipped": c.skipped,
                "metrics": asdict(c.metrics) if c.metrics else None,
                "best_params": c.best_params,
                "seed_metrics": [asdict(m) for m in c.seed_metrics],
                "seed_params": c.seed_params,
            } for c in self.cells],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ComparisonReport":
        cells = [CellResult(c["family"], c["target"], c["task"],
                            MetricSet(**c["metrics"]) if c["metrics"] else None, c["best_params"],
                            [MetricSet(**m) for m in c["seed_metrics"]], c["seed_params"], c["skipped"])
                 for c in d["cells"]]
        return cls(cells, tuple(d["seeds"]), d["fingerprint"], d["tau"], d["config"], d["access"])

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    @classmethod
    def loads(cls, text: str) -> "ComparisonReport":
        return cls.from_dict(json.loads(text))


def cell_seeds(master_seed: int, cell_index: int) -> tuple[int, int, int]:
    """(hpo, model, subsample) seeds for one replicate of one cell."""
    state = np.random.SeedSequence([int(master_seed), int(cell_index)]).generate_state(3)
    return tuple(int(s) for s in state)


def _subsample(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    if n <= k:
        return np.arange(n)
    return np.sort(rng.choice(n, k, replace=False))


def _has_both(y) -> bool:
    return len(np.unique(y)) == 2


def _evaluate(model, data: SplitData, family: Family, target: Target, task: Task, rows=None) -> MetricSet:
    y = data.target(target, task)
    if rows is not None:
        y = y[rows]
    pred = predict(model, data.inputs(family, rows))
    if task is Task.REGRESSION:
        return regression_metrics(y, pred.values)
    return classification_metrics(y, pred.values, pred.classes)


@dataclass
class CellRows:
    """Seeded row subsets for one replicate of one cell."""

    hpo_seed: int
    model_seed: int
    train: np.ndarray
    tune: np.ndarray
    validation: np.ndarray

    @property
    def shared(self) -> bool:
        return len(self.tune) == len(self.train)


def cell_rows(data: ChurnDataset, seed: int, cell_index: int, cfg: ComparisonConfig) -> CellRows:
    hpo_seed, model_seed, sub_seed = cell_seeds(seed, cell_index)
    rng = np.random.default_rng(sub_seed)
    n_train = len(data.split(Split.TRAIN))
    n_val = len(data.split(Split.VALIDATION))
    train_rows = _subsample(n_train, cfg.max_train_examples, rng)
    tune_rows = train_rows[_subsample(len(train_rows), cfg.max_tune_examples, rng)]
    val_rows = _subsample(n_val, cfg.max_validation_examples, rng)
    return CellRows(hpo_seed, model_seed, train_rows, tune_rows, val_rows)


def tune_cell(data: ChurnDataset, family: Family, target: Target, task: Task, rows: CellRows,
              cfg: ComparisonConfig, cache: Optional[dict] = None) -> hpo.SearchResult:
    """Search the family's space, fitting on the tuning rows and scoring on validation.

    With ``cache`` (and tuning rows equal to the refit rows) every fitted
    model is kept under its full hyperparameter JSON.
    """
    fixed = dict(cfg.hyperparameters.get(family.value, {}))
    with data.in_phase("tune"):
        train = data.split(Split.TRAIN)
        val = data.split(Split.VALIDATION)
        y_train = train.target(target, task)

        def objective(params):
            spec = EstimatorSpec(family, task, {**fixed, **params}, rows.model_seed)
            model = fit(spec, train.inputs(family, rows.tune), y_train[rows.tune])
            if cache is not None and rows.shared:
                cache[hpo.params_json(spec.hyperparameters)] = model
            return _evaluate(model, val, family, target, task, rows.validation).primary(task)

        space = SEARCH_SPACES[family]
        if cfg.optimizer == "bayes":
            return hpo.bayes_optimize(space, objective, cfg.budget, rows.hpo_seed, min(cfg.n_init, cfg.budget))
        if cfg.optimizer == "random":
            return hpo.random_search(space, objective, cfg.budget, rows.hpo_seed)
        return hpo.SearchResult({}, float("nan"), [])


def refit_cell(data: ChurnDataset, family: Family, target: Target, task: Task, rows: CellRows,
               params: dict, cache: Optional[dict] = None):
    """Fit ``params`` on the refit rows, reusing a cached tuning fit when one matches."""
    with data.in_phase("refit"):
        spec = EstimatorSpec(family, task, params, rows.model_seed)
        model = (cache or {}).get(hpo.params_json(spec.hyperparameters))
        if model is None:
            train = data.split(Split.TRAIN)
            model = fit(spec, train.inputs(family, rows.train), train.target(target, task)[rows.train])
    return model


def score_on_test(data: ChurnDataset, model, family: Family, target: Target, task: Task) -> MetricSet:
    with data.in_phase("test"):
        return _evaluate(model, data.split(Split.TEST), family, target, task)


def run_cell(data: ChurnDataset, family: Family, target: Target, task: Task, seed: int,
             cell_index: int, cfg: ComparisonConfig) -> tuple[MetricSet, dict, list]:
    """One replicate: tune on train/validation, refit on train, score on test.

    The refit rows are a seeded subsample of the training split and the
    tuning rows a subsample of those. When both are the same rows, the
    refit is the tuning fit of the winning configuration, so it is reused.
    """
    with data.in_phase("tune"):
        rows = cell_rows(data, seed, cell_index, cfg)
    cache = {}
    result = tune_cell(data, family, target, task, rows, cfg, cache)
    if result.best_params is None:
        errors = "; ".join(sorted({t.error for t in result.trials if t.error}))
        raise RuntimeError(f"all {len(result.trials)} tuning trials failed: {errors}")
    best = {**cfg.hyperparameters.get(family.value, {}), **result.best_params}
    model = refit_cell(data, family, target, task, rows, best, cache)
    return score_on_test(data, model, family, target, task), best, result.trials


def grid_index(family: Family, target: Target, task: Task) -> int:
    return (FAMILY_ORDER.index(family) * len(Target) + list(Target).index(target)) * len(Task) \
        + list(Task).index(task)


def run_comparison(data: ChurnDataset, cfg: Optional[ComparisonConfig] = None, log=None) -> ComparisonReport:
    """Fill the family x target x task grid. Failing cells are recorded as
    skipped with the reason; the grid is always complete."""
    cfg = cfg or ComparisonConfig()
    cfg.validate()
    families = sorted((Family.parse(f) for f in cfg.families), key=FAMILY_ORDER.index)
    cells = []
    for family in families:
        for target in Target:
            for task in Task:
                idx = grid_index(family, target, task)
                start = time.perf_counter()
                per_seed, params = [], []
                reason = ""
                for seed in cfg.seeds:
                    try:
                        m, best, _ = run_cell(data, family, target, task, seed, idx, cfg)
                    except Exception as exc:  # recorded, never aborts the grid
                        reason = f"seed {seed}: {type(exc).__name__}: {exc}".replace("\n", " ")
                        break
                    per_seed.append(m)
                    params.append(best)
                if reason:
                    cell = CellResult(family.value, target.value, task.value, None, None, skipped=reason)
                else:
                    med = median_metrics(per_seed)
                    # params of the replicate nearest the median (lowest seed on ties)
                    prim = np.array([m.primary(task) for m in per_seed])
                    k = int(np.argmin(np.abs(prim - med.primary(task))))
                    cell = CellResult(family.value, target.value, task.value, med, params[k], per_seed, params)
                cells.append(cell)
                if log is not None:
                    val = cell.value()
                    shown = "skipped" if val is None else f"{val:.4f}"
                    log(f"{family.value:12s} {target.value:6s} {task.value:14s} {shown} "
                        f"({time.perf_counter() - start:.1f}s)")
    access = {f"{p}/{s}": n for (p, s), n in sorted(data.access.items())}
    return ComparisonReport(cells, tuple(cfg.seeds), data.fingerprint, data.tau, cfg.to_dict(), access)


# ---------------------------------------------------------------- report output

REPORT_COLUMNS = ("family", "target", "task", "metric", "value", "n", "seed_count", "best_params_json")
_METRIC_ROWS = {Task.REGRESSION: ("r2", "mse", "variance"), Task.CLASSIFICATION: ("accuracy", "auc", "f1")}


def _num(x) -> str:
    return "" if x is None else repr(float(x))


def format_report_csv(report: ComparisonReport) -> str:
    """One row per (cell, metric), cells in canonical family/target/task order.

    Skipped cells get a single row with metric ``skipped`` and the reason in
    ``best_params_json``.
    """
    import csv
    import io
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for c in sorted(report.cells, key=lambda c: grid_index(Family.parse(c.family), Target(c.target),
                                                            Task(c.task))):
        if c.metrics is None:
            w.writerow([c.family, c.target, c.task, "skipped", "", 0, len(report.seeds),
                        json.dumps({"reason": c.skipped}, sort_keys=True)])
            continue
        for name in _METRIC_ROWS[Task(c.task)]:
            w.writerow([c.family, c.target, c.task, name, _num(getattr(c.metrics, name)),
                        c.metrics.n_examples, len(c.seed_metrics), hpo.params_json(c.best_params)])
    return buf.getvalue()


def parse_report_csv(text: str) -> list[dict]:
    import csv
    import io
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != REPORT_COLUMNS:
        raise ValueError("report CSV header does not match the canonical schema")
    return list(reader)


_SVG_W, _SVG_H = 720, 360
_MARGIN = {"left": 60, "right": 20, "top": 40, "bottom": 80}
_COLORS = {"day": "#8c8c8c", "vector": "#1f77b4"}


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")


def render_task_svg(report: ComparisonReport, task: Task) -> str:
    """Static grouped-bar chart: one day/vector bar pair per family.

    Structure: ``<svg>`` containing a ``<title>``, one ``<g class="axis">``,
    then one ``<g class="family" data-family=...>`` per family holding one
    ``<rect class="bar" data-target=... data-value=...>`` per target and a
    ``<text>`` label, then a ``<g class="legend">``. Skipped cells draw no
    rect and carry ``data-skipped`` on the group.
    """
    metric = "r2" if task is Task.REGRESSION else "accuracy"
    fams = [f.value for f in FAMILY_ORDER if any(c.family == f.value for c in report.cells)]
    vals = [c.value() for c in report.cells if c.task == task.value and c.value() is not None]
    lo = min([0.0, *vals])
    hi = max([1.0, *vals])
    x0, x1 = _MARGIN["left"], _SVG_W - _MARGIN["right"]
    y0, y1 = _MARGIN["top"], _SVG_H - _MARGIN["bottom"]

    def ypos(v):
        return y1 - (v - lo) / (hi - lo) * (y1 - y0)

    slot = (x1 - x0) / max(len(fams), 1)
    bar = slot * 0.35
    title = f"{task.value}: {metric} by family, day vs vector target"
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_SVG_W}" height="{_SVG_H}" '
           f'viewBox="0 0 {_SVG_W} {_SVG_H}">',
           f"<title>{_esc(title)}</title>",
           '<g class="axis">',
           f'<line x1="{x0}" y1="{ypos(0.0):.2f}" x2="{x1}" y2="{ypos(0.0):.2f}" stroke="black"/>',
           f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>']
    for tick in np.linspace(lo, hi, 6):
        out.append(f'<text x="{x0 - 6}" y="{ypos(tick) + 4:.2f}" font-size="10" text-anchor="end">'
                   f"{tick:.2f}</text>")
    out.append(f'<text x="14" y="{(y0 + y1) / 2:.2f}" font-size="12" '
               f'transform="rotate(-90 14 {(y0 + y1) / 2:.2f})" text-anchor="middle">{metric}</text>')
    out.append("</g>")
    for i, fam in enumerate(fams):
        skipped = [c.target for c in report.cells if c.family == fam and c.task == task.value and c.metrics is None]
        attr = f' data-skipped="{",".join(skipped)}"' if skipped else ""
        out.append(f'<g class="family" data-family="{_esc(fam)}"{attr}>')
        cx = x0 + slot * (i + 0.5)
        for j, target in enumerate(Target):
            try:
                v = report.cell(fam, target, task).value()
            except KeyError:
                v = None
            if v is None:
                continue
            x = cx - bar + j * bar
            top, base = ypos(max(v, 0.0)), ypos(min(v, 0.0))
            out.append(f'<rect class="bar" data-target="{target.value}" data-value="{v!r}" '
                       f'x="{x:.2f}" y="{top:.2f}" width="{bar:.2f}" height="{base - top:.2f}" '
                       f'fill="{_COLORS[target.value]}"/>')
        out.append(f'<text x="{cx:.2f}" y="{y1 + 14}" font-size="10" text-anchor="end" '
                   f'transform="rotate(-35 {cx:.2f} {y1 + 14})">{_esc(fam)}</text>')
        out.append("</g>")
    out.append('<g class="legend">')
    for j, target in enumerate(Target):
        lx = x1 - 150 + j * 75
        out.append(f'<rect x="{lx}" y="12" width="12" height="12" fill="{_COLORS[target.value]}"/>')
        out.append(f'<text x="{lx + 16}" y="22" font-size="11">{target.value}</text>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _write(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def emit_report(report: ComparisonReport, out_dir, formats=("csv", "svg", "json")) -> list:
    """Write report files; identical reports give identical bytes."""
    from pathlib import Path
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    unknown = set(formats) - {"csv", "svg", "json"}
    if unknown:
        raise ValueError(f"unknown report formats {sorted(unknown)}")
    if "csv" in formats:
        p = out / "report.csv"
        _write(p, format_report_csv(report))
        written.append(p)
    if "svg" in formats:
        for task in Task:
            p = out / f"report_{task.value}.svg"
            _write(p, render_task_svg(report, task))
            written.append(p)
    if "json" in formats:
        p = out / "report.json"
        _write(p, report.dumps())
        written.append(p)
    return written


def direction_summary(report: ComparisonReport, task: Task) -> dict:
    """Per family: (day value, vector value) for the task, None where skipped."""
    out = {}
    for fam in FAMILY_ORDER:
        try:
            d = report.cell(fam, Target.DAY, task).value()
            v = report.cell(fam, Target.VECTOR, task).value()
        except KeyError:
            continue
        out[fam.value] = (d, v)
    return out


def tau_sweep(examples: Sequence[LabeledExample], taus: Sequence[float]) -> list[dict]:
    """Vector positive rate on the training split at each threshold, next to the day rate."""
    pool = [e for e in examples if not e.label.censored and e.split is Split.TRAIN]
    if not pool:
        raise ValueError("no uncensored training examples")
    vec = np.array([e.label.churn_vector for e in pool])
    day_rate = float(np.mean([e.label.churned_within_horizon for e in pool]))
    return [{"tau": float(t), "vector_rate": float(np.mean(vec <= t)), "day_rate": day_rate} for t in taus]

