"""Hyperparameter search: Gaussian-process Bayesian optimization and random search.

Both optimizers maximize an objective over a ``SearchSpace``. Every
dimension maps to the unit interval (log-scaled dimensions in log space,
categorical dimensions one-hot), and the surrogate works in that encoding.

Bayesian optimization starts with ``n_init`` draws from the same random
stream random search uses, so with ``budget == n_init`` the two coincide.
After that each trial maximizes expected improvement over a pool of random
candidates under an RBF-kernel GP fitted to the standardized objective.
"""
from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import ndtr

DEFAULT_N_INIT = 8
DEFAULT_N_CANDIDATES = 1024
JITTER = 1e-6
LENGTHSCALES = (0.05, 0.1, 0.2, 0.3, 0.5, 1.0, 2.0)


@dataclass(frozen=True)
class Dimension:
    """One searchable hyperparameter.

    ``kind`` is ``"float"``, ``"int"`` or ``"categorical"``. Numeric
    dimensions span ``[lo, hi]``; ``log=True`` samples uniformly in log space.
    """

    name: str
    kind: str
    lo: float = 0.0
    hi: float = 1.0
    log: bool = False
    choices: tuple = ()

    def validate(self) -> None:
        if self.kind == "categorical":
            if len(self.choices) == 0:
                raise ValueError(f"{self.name}: categorical dimension needs choices")
            return
        if self.kind not in ("float", "int"):
            raise ValueError(f"{self.name}: unknown kind {self.kind!r}")
        if not self.lo < self.hi:
            raise ValueError(f"{self.name}: need lo < hi, got [{self.lo}, {self.hi}]")
        if self.log and self.lo <= 0:
            raise ValueError(f"{self.name}: log scale needs lo > 0")

    @property
    def width(self) -> int:
        return len(self.choices) if self.kind == "categorical" else 1

    def _span(self):
        if self.log:
            return math.log(self.lo), math.log(self.hi)
        if self.kind == "int":
            # widen by half a step so every integer owns an equal slice
            return self.lo - 0.5, self.hi + 0.5
        return self.lo, self.hi

    def from_unit(self, u: float):
        if self.kind == "categorical":
            k = min(int(u * len(self.choices)), len(self.choices) - 1)
            return self.choices[k]
        a, b = self._span()
        v = a + u * (b - a)
        if self.log:
            v = math.exp(v)
        if self.kind == "int":
            return int(min(max(round(v), self.lo), self.hi))
        return float(min(max(v, self.lo), self.hi))

    def to_unit(self, value) -> np.ndarray:
        if self.kind == "categorical":
            out = np.zeros(len(self.choices))
            out[self.choices.index(value)] = 1.0
            return out
        a, b = self._span()
        v = math.log(value) if self.log else float(value)
        return np.array([(v - a) / (b - a)])

    def to_dict(self) -> dict:
        if self.kind == "categorical":
            return {"kind": "categorical", "choices": list(self.choices)}
        return {"kind": self.kind, "lo": self.lo, "hi": self.hi, "log": self.log}

    @classmethod
    def from_dict(cls, name: str, d: dict) -> "Dimension":
        allowed = {"kind", "lo", "hi", "log", "choices"}
        unknown = set(d) - allowed
        if unknown:
            raise KeyError(f"search dimension {name!r}: unknown keys {sorted(unknown)}")
        dim = cls(name, d["kind"], d.get("lo", 0.0), d.get("hi", 1.0), bool(d.get("log", False)),
                  tuple(d.get("choices", ())))
        dim.validate()
        return dim


@dataclass(frozen=True)
class SearchSpace:
    dims: tuple

    def __post_init__(self):
        if not self.dims:
            raise ValueError("search space needs at least one dimension")
        names = [d.name for d in self.dims]
        if len(set(names)) != len(names):
            raise ValueError("duplicate dimension names")
        for d in self.dims:
            d.validate()

    @property
    def names(self) -> tuple:
        return tuple(d.name for d in self.dims)

    @property
    def encoded_width(self) -> int:
        return sum(d.width for d in self.dims)

    def sample(self, rng: np.random.Generator) -> dict:
        return {d.name: d.from_unit(rng.random()) for d in self.dims}

    def encode(self, config: dict) -> np.ndarray:
        return np.concatenate([d.to_unit(config[d.name]) for d in self.dims])

    def to_dict(self) -> dict:
        return {d.name: d.to_dict() for d in self.dims}

    @classmethod
    def from_dict(cls, d: dict) -> "SearchSpace":
        return cls(tuple(Dimension.from_dict(k, v) for k, v in d.items()))


def uniform(name, lo, hi, log=False) -> Dimension:
    return Dimension(name, "float", lo, hi, log)


def integer(name, lo, hi, log=False) -> Dimension:
    return Dimension(name, "int", lo, hi, log)


def categorical(name, choices) -> Dimension:
    return Dimension(name, "categorical", choices=tuple(choices))


@dataclass
class TrialRecord:
    index: int
    params: dict
    objective: float
    seconds: float
    status: str = "ok"
    error: str = ""

    @property
    def failed(self) -> bool:
        return self.status != "ok"


@dataclass
class SearchResult:
    best_params: Optional[dict]
    best_objective: float
    trials: list = field(default_factory=list)

    def best_so_far(self) -> np.ndarray:
        vals = [t.objective if not t.failed else -np.inf for t in self.trials]
        return np.maximum.accumulate(vals)


def _evaluate(objective, params, index) -> TrialRecord:
    start = time.perf_counter()
    try:
        value = float(objective(params))
        status, error = ("ok", "") if math.isfinite(value) else ("failed", f"non-finite objective {value}")
    except Exception as exc:  # any trainer failure is recorded, never fatal
        value, status, error = float("nan"), "failed", f"{type(exc).__name__}: {exc}"
    return TrialRecord(index, params, value, time.perf_counter() - start, status, error)


def _impute_failures(trials: list) -> None:
    """Give failed trials the worst objective observed among successful ones."""
    ok = [t.objective for t in trials if not t.failed]
    if not ok:
        return
    worst = min(ok)
    for t in trials:
        if t.failed:
            t.objective = worst


def _finish(trials: list) -> SearchResult:
    _impute_failures(trials)
    best, best_val = None, -np.inf
    for t in trials:
        if not t.failed and t.objective > best_val:
            best, best_val = t.params, t.objective
    return SearchResult(best, float(best_val), trials)


def random_search(space: SearchSpace, objective: Callable[[dict], float], budget: int,
                  seed: int = 0) -> SearchResult:
    """Evaluate ``budget`` i.i.d. configurations; deterministic given ``seed``."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    rng = np.random.default_rng(seed)
    trials = [_evaluate(objective, space.sample(rng), i) for i in range(budget)]
    return _finish(trials)


def rbf_kernel(A: np.ndarray, B: np.ndarray, lengthscale: float) -> np.ndarray:
    d2 = np.sum(A**2, 1)[:, None] + np.sum(B**2, 1)[None, :] - 2.0 * A @ B.T
    return np.exp(-0.5 * np.maximum(d2, 0.0) / lengthscale**2)


@dataclass
class GaussianProcess:
    """Zero-mean GP on standardized targets with unit signal variance."""

    X: np.ndarray
    lengthscale: float
    chol: np.ndarray
    alpha: np.ndarray
    y_mean: float
    y_std: float

    @classmethod
    def fit(cls, X, y, lengthscales=LENGTHSCALES, jitter=JITTER) -> "GaussianProcess":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        y_mean = float(y.mean())
        y_std = float(y.std())
        if y_std < 1e-12:
            y_std = 1.0
        z = (y - y_mean) / y_std
        best = None
        for ls in lengthscales:
            K = rbf_kernel(X, X, ls) + jitter * np.eye(len(X))
            try:
                L = np.linalg.cholesky(K)
            except np.linalg.LinAlgError:
                continue
            alpha = np.linalg.solve(L.T, np.linalg.solve(L, z))
            # log marginal likelihood up to a constant
            lml = -0.5 * z @ alpha - np.sum(np.log(np.diag(L)))
            if best is None or lml > best[0]:
                best = (lml, ls, L, alpha)
        if best is None:
            raise np.linalg.LinAlgError("kernel matrix not positive definite at any lengthscale")
        _, ls, L, alpha = best
        return cls(X, ls, L, alpha, y_mean, y_std)

    def predict(self, Xs) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and standard deviation in objective units."""
        Ks = rbf_kernel(np.asarray(Xs, dtype=float), self.X, self.lengthscale)
        mu = Ks @ self.alpha
        v = np.linalg.solve(self.chol, Ks.T)
        var = np.maximum(1.0 - np.sum(v**2, axis=0), 0.0)
        return self.y_mean + self.y_std * mu, self.y_std * np.sqrt(var)


def expected_improvement(mu, sigma, incumbent, xi=0.0) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    gap = mu - incumbent - xi
    out = np.maximum(gap, 0.0)
    pos = sigma > 1e-12
    z = gap[pos] / sigma[pos]
    pdf = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    out[pos] = gap[pos] * ndtr(z) + sigma[pos] * pdf
    return out


def bayes_optimize(space: SearchSpace, objective: Callable[[dict], float], budget: int,
                   seed: int = 0, n_init: int = DEFAULT_N_INIT,
                   n_candidates: int = DEFAULT_N_CANDIDATES) -> SearchResult:
    """GP + expected-improvement search; deterministic given ``seed``.

    The first ``n_init`` trials are random draws. Failed trials enter the
    surrogate at the worst value observed so far.
    """
    if n_init < 1:
        raise ValueError("n_init must be >= 1")
    if budget < n_init:
        raise ValueError(f"budget {budget} is smaller than n_init {n_init}")
    rng = np.random.default_rng(seed)
    trials = [_evaluate(objective, space.sample(rng), i) for i in range(n_init)]
    for i in range(n_init, budget):
        ok = [t.objective for t in trials if not t.failed]
        candidates = [space.sample(rng) for _ in range(n_candidates)]
        if not ok:
            params = candidates[0]
        else:
            worst = min(ok)
            X = np.array([space.encode(t.params) for t in trials])
            y = np.array([worst if t.failed else t.objective for t in trials])
            gp = GaussianProcess.fit(X, y)
            C = np.array([space.encode(c) for c in candidates])
            mu, sd = gp.predict(C)
            ei = expected_improvement(mu, sd, max(ok))
            if np.max(ei) <= 0.0:
                # surrogate sees no gain anywhere; fall back to the highest mean
                params = candidates[int(np.argmax(mu))]
            else:
                params = candidates[int(np.argmax(ei))]
        trials.append(_evaluate(objective, params, i))
    return _finish(trials)


TRIAL_COLUMNS = ("trial", "params_json", "objective", "seconds", "status")


def params_json(params: Optional[dict]) -> str:
    return json.dumps(params if params is not None else {}, sort_keys=True, separators=(",", ":"))


def format_trials_csv(trials: Sequence[TrialRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRIAL_COLUMNS)
    for t in trials:
        w.writerow([t.index, params_json(t.params), repr(float(t.objective)), f"{t.seconds:.6f}", t.status])
    return buf.getvalue()


def parse_trials_csv(text: str) -> list[TrialRecord]:
    reader = csv.reader(io.StringIO(text))
    if tuple(next(reader)) != TRIAL_COLUMNS:
        raise ValueError("trial CSV header does not match the canonical schema")
    return [TrialRecord(int(i), json.loads(p), float(o), float(s), st) for i, p, o, s, st in reader]
