"""Uniform fit/predict over the ten estimator families.

Tabular families take ``X`` of shape (n, F). Sequence families take a pair
``(X, mask)`` with ``X`` of shape (n, W, F). Inputs are expected to be
standardized already (see ``churnvec.features.standardize``); a model may
carry its own input stats, in which case ``predict`` applies them.

Regression targets are centred and scaled internally for the linear and
network families, so one set of hyperparameter ranges serves both target
encodings.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import linear, nets, trees
from .nets import TrainingDiverged


class Family(enum.Enum):
    LASSO = "Lasso"
    LINEAR_SVM = "LinearSvm"
    DECISION_TREE = "DecisionTree"
    RANDOM_FOREST = "RandomForest"
    GBM = "Gbm"
    MLP = "Mlp"
    CNN1D = "Cnn1d"
    RNN = "Rnn"
    LSTM = "Lstm"
    ATTENTION_NET = "AttentionNet"

    @classmethod
    def parse(cls, name: str) -> "Family":
        for f in cls:
            if f.value.lower() == str(name).lower() or f.name.lower() == str(name).lower():
                return f
        valid = ", ".join(f.value for f in cls)
        raise ValueError(f"unknown family {name!r}; valid: {valid}")

    @property
    def sequence(self) -> bool:
        return self in SEQUENCE_FAMILIES

    @property
    def network(self) -> bool:
        return self in NETWORK_FAMILIES


class Task(enum.Enum):
    REGRESSION = "regression"
    CLASSIFICATION = "classification"

    @classmethod
    def parse(cls, name: str) -> "Task":
        aliases = {"reg": cls.REGRESSION, "cls": cls.CLASSIFICATION}
        if name in aliases:
            return aliases[name]
        return cls(name)


# canonical reporting order
FAMILY_ORDER = tuple(Family)
SEQUENCE_FAMILIES = (Family.CNN1D, Family.RNN, Family.LSTM, Family.ATTENTION_NET)
NETWORK_FAMILIES = (Family.MLP, *SEQUENCE_FAMILIES)

DEFAULT_HYPERPARAMS = {
    Family.LASSO: {"lam": 0.01},
    Family.LINEAR_SVM: {"C": 1.0, "epochs": 20, "epsilon": 0.1},
    Family.DECISION_TREE: {"max_depth": 8, "min_leaf": 20},
    Family.RANDOM_FOREST: {"n_trees": 30, "feature_subsample": 0.5, "max_depth": 10, "min_leaf": 5},
    Family.GBM: {"n_rounds": 100, "learning_rate": 0.1, "max_depth": 3, "min_leaf": 10},
    Family.MLP: {"hidden": 64, "n_layers": 2, "lr": 3e-3, "epochs": 30, "batch_size": 128},
    Family.CNN1D: {"filters": 16, "kernel": 3, "hidden": 32, "lr": 3e-3, "epochs": 20, "batch_size": 128},
    Family.RNN: {"hidden": 16, "lr": 3e-3, "epochs": 20, "batch_size": 128},
    Family.LSTM: {"hidden": 16, "lr": 3e-3, "epochs": 20, "batch_size": 128},
    Family.ATTENTION_NET: {"hidden": 16, "lr": 3e-3, "epochs": 20, "batch_size": 128},
}

# (lo, hi) accepted for each hyperparameter; None = unbounded on that side
HYPERPARAM_RANGES = {
    "lam": (0.0, None), "C": (1e-12, None), "epochs": (1, 10_000), "epsilon": (0.0, None),
    "max_depth": (0, 64), "min_leaf": (1, None), "n_trees": (1, 10_000),
    "feature_subsample": (1e-9, 1.0), "n_rounds": (0, 100_000), "learning_rate": (1e-9, 1.0),
    "hidden": (1, 4096), "n_layers": (0, 8), "lr": (1e-9, 1.0), "batch_size": (1, None),
    "filters": (1, 4096), "kernel": (1, 64),
}


@dataclass
class EstimatorSpec:
    family: Family
    task: Task
    hyperparameters: dict = field(default_factory=dict)
    rng_seed: int = 0

    def __post_init__(self):
        if isinstance(self.family, str):
            self.family = Family.parse(self.family)
        if isinstance(self.task, str):
            self.task = Task.parse(self.task)
        merged = dict(DEFAULT_HYPERPARAMS[self.family])
        unknown = set(self.hyperparameters) - set(merged)
        if unknown:
            raise ValueError(f"{self.family.value} has no hyperparameters {sorted(unknown)}")
        merged.update(self.hyperparameters)
        for k, v in merged.items():
            lo, hi = HYPERPARAM_RANGES[k]
            if (lo is not None and v < lo) or (hi is not None and v > hi):
                raise ValueError(f"{self.family.value}.{k}={v} outside [{lo}, {hi}]")
        self.hyperparameters = merged

    def to_dict(self) -> dict:
        return {"family": self.family.value, "task": self.task.value,
                "hyperparameters": self.hyperparameters, "rng_seed": self.rng_seed}


@dataclass
class Prediction:
    values: np.ndarray
    classes: Optional[np.ndarray] = None


@dataclass
class TrainedModel:
    spec: EstimatorSpec
    params: dict
    meta: dict = field(default_factory=dict)

    @property
    def family(self) -> Family:
        return self.spec.family


def build_network(family: Family, hp: dict):
    if family is Family.MLP:
        return nets.MLP((hp["hidden"],) * hp["n_layers"])
    if family is Family.CNN1D:
        return nets.Cnn1d(hp["filters"], hp["kernel"], hp["hidden"])
    if family is Family.RNN:
        return nets.Rnn(hp["hidden"])
    if family is Family.LSTM:
        return nets.Lstm(hp["hidden"])
    if family is Family.ATTENTION_NET:
        return nets.AttentionNet(hp["hidden"])
    raise ValueError(f"{family.value} is not a network family")


def _split_inputs(spec: EstimatorSpec, inputs):
    if spec.family.sequence:
        if not isinstance(inputs, tuple) or len(inputs) != 2:
            raise ValueError(f"{spec.family.value} needs (windows, mask) inputs")
        X, M = np.asarray(inputs[0], dtype=float), np.asarray(inputs[1], dtype=float)
        if X.ndim != 3 or M.shape != X.shape[:2]:
            raise ValueError(f"windows must be (n, W, F) with mask (n, W); got {X.shape}, {M.shape}")
        return X, M
    if isinstance(inputs, tuple):
        raise ValueError(f"{spec.family.value} needs tabular (n, F) inputs, not windows")
    X = np.asarray(inputs, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"tabular inputs must be 2-D; got shape {X.shape}")
    return X, None


def _tree_params(tree: trees.Tree, prefix: str) -> dict:
    return {f"{prefix}feature": tree.feature, f"{prefix}threshold": tree.threshold,
            f"{prefix}left": tree.left, f"{prefix}right": tree.right, f"{prefix}value": tree.value}


def _tree_from(params: dict, prefix: str) -> trees.Tree:
    return trees.Tree(*(params[prefix + k] for k in ("feature", "threshold", "left", "right", "value")))


def fit(spec: EstimatorSpec, inputs, y, input_stats=None) -> TrainedModel:
    """Fit one estimator; deterministic given ``spec.rng_seed``.

    ``y`` holds real targets (regression) or 0/1 labels (classification).
    With ``input_stats`` the inputs are raw: the model standardizes them and
    keeps the stats so ``predict`` also takes raw inputs.
    """
    X, M = _split_inputs(spec, inputs)
    if input_stats is not None:
        from ..features import standardize_array
        X = standardize_array(X, input_stats, M)
    y = np.asarray(y, dtype=float)
    if len(y) == 0 or len(y) != len(X):
        raise ValueError(f"need a nonempty training set with one target per row ({len(X)} rows, {len(y)} targets)")
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
        raise ValueError("training data must be finite")
    hp = spec.hyperparameters
    cls = spec.task is Task.CLASSIFICATION
    task = spec.task.value
    if cls:
        if not np.all(np.isin(y, (0.0, 1.0))):
            raise ValueError("classification labels must be 0/1")
        if y.min() == y.max():
            raise ValueError("classification needs both classes in the training set")
        y_mean, y_scale = 0.0, 1.0
    else:
        y_mean = float(y.mean())
        std = float(y.std())
        y_scale = std if std > 1e-12 else 1.0
    meta = {"n_features": int(X.shape[-1]), "y_mean": y_mean, "y_scale": y_scale}
    if M is not None:
        meta["window"] = int(X.shape[1])
    ys = y if cls else (y - y_mean) / y_scale
    fam = spec.family
    seed = spec.rng_seed

    if fam is Family.LASSO:
        coef, intercept, hist = linear.fit_lasso_coordinate_descent(X, ys, hp["lam"])
        params = {"coef": coef, "intercept": np.array([intercept])}
        meta["final_loss"] = float(hist[-1])
        meta["sweeps"] = len(hist) - 1
    elif fam is Family.LINEAR_SVM:
        target = 2.0 * ys - 1.0 if cls else ys
        w, b = linear.fit_linear_svm(X, target, hp["C"], int(hp["epochs"]), seed, task, hp["epsilon"])
        params = {"coef": w, "intercept": np.array([b])}
    elif fam is Family.DECISION_TREE:
        tree = trees.fit_cart(X, y, int(hp["max_depth"]), int(hp["min_leaf"]), task)
        params = _tree_params(tree, "")
    elif fam is Family.RANDOM_FOREST:
        forest = trees.fit_random_forest(X, y, int(hp["n_trees"]), hp["feature_subsample"],
                                         int(hp["max_depth"]), int(hp["min_leaf"]), task, seed)
        params = {}
        for k, t in enumerate(forest.trees):
            params.update(_tree_params(t, f"tree{k}_"))
        meta["n_trees"] = len(forest.trees)
    elif fam is Family.GBM:
        model = trees.fit_gbm(X, y, int(hp["n_rounds"]), hp["learning_rate"], int(hp["max_depth"]),
                              int(hp["min_leaf"]), task)
        params = {"base_score": np.array([model.base_score])}
        for k, t in enumerate(model.trees):
            params.update(_tree_params(t, f"tree{k}_"))
        meta.update(n_trees=len(model.trees), train_loss=model.train_loss, final_loss=model.train_loss[-1])
    else:
        net = build_network(fam, hp)
        rng = np.random.default_rng(seed)
        params = net.init_params(rng, X.shape[-1])
        # zero head: the first output is the base rate / target mean
        params["w_out"][:] = 0.0
        if cls:
            p = y.mean()
            params["b_out"][0] = np.log(p / (1 - p))
        history = nets.train_network(net, params, X, M, ys, task, hp["lr"], int(hp["epochs"]),
                                     int(hp["batch_size"]), seed + 1)
        meta.update(loss_history=history, final_loss=history[-1], epochs_run=len(history))
    if input_stats is not None:
        params["input_mean"] = np.asarray(input_stats.mean, dtype=float)
        params["input_std"] = np.asarray(input_stats.std, dtype=float)
    return TrainedModel(spec, params, meta)


def raw_scores(model: TrainedModel, inputs) -> np.ndarray:
    """Model output before the classification link / target unscaling."""
    spec = model.spec
    X, M = _split_inputs(spec, inputs)
    if X.shape[-1] != model.meta["n_features"]:
        raise ValueError(f"model expects {model.meta['n_features']} features, got {X.shape[-1]}")
    if M is not None and X.shape[1] != model.meta["window"]:
        raise ValueError(f"model expects windows of {model.meta['window']}, got {X.shape[1]}")
    p = model.params
    if "input_mean" in p:
        from ..features import FeatureStats, standardize_array
        X = standardize_array(X, FeatureStats(p["input_mean"].copy(), p["input_std"].copy()), M)
    fam = spec.family
    if fam in (Family.LASSO, Family.LINEAR_SVM):
        return X @ p["coef"] + p["intercept"][0]
    if fam is Family.DECISION_TREE:
        return _tree_from(p, "").predict(X)
    if fam is Family.RANDOM_FOREST:
        return np.mean([_tree_from(p, f"tree{k}_").predict(X) for k in range(model.meta["n_trees"])], axis=0)
    if fam is Family.GBM:
        out = np.full(len(X), p["base_score"][0])
        lr = spec.hyperparameters["learning_rate"]
        for k in range(model.meta["n_trees"]):
            out = out + lr * _tree_from(p, f"tree{k}_").predict(X)
        return out
    net = build_network(fam, spec.hyperparameters)
    z, _ = net.forward(p, X, M)
    return z


def predict(model: TrainedModel, inputs) -> Prediction:
    """Deterministic predictions: target estimates, or probabilities plus classes at 0.5."""
    z = raw_scores(model, inputs)
    fam = model.spec.family
    if model.spec.task is Task.REGRESSION:
        if fam in (Family.LASSO, Family.LINEAR_SVM) or fam.network:
            z = model.meta["y_mean"] + model.meta["y_scale"] * z
        return Prediction(np.asarray(z, dtype=float))
    if fam is Family.LINEAR_SVM or fam is Family.GBM or fam.network:
        prob = nets.sigmoid(z)
    else:
        prob = np.clip(z, 0.0, 1.0)
    return Prediction(prob, (prob > 0.5).astype(int))


FORMAT_HEADER = "churnvec-model 1"


def _fmt_array(a: np.ndarray) -> str:
    if a.dtype.kind in "iu":
        return " ".join(str(int(v)) for v in a.reshape(-1))
    return " ".join("%.17g" % v for v in a.reshape(-1))


def dumps_model(model: TrainedModel) -> str:
    """Text artifact: header, spec/meta JSON lines, then one block per parameter.

    Each parameter block is ``param <name> <f8|i8> <ndim> <dims...>`` followed by a
    line of row-major values (floats with 17 significant digits).
    """
    lines = [FORMAT_HEADER, "family " + model.spec.family.value,
             "spec " + json.dumps(model.spec.to_dict(), sort_keys=True),
             "meta " + json.dumps(model.meta, sort_keys=True)]
    for name, arr in model.params.items():
        arr = np.asarray(arr)
        kind = "i8" if arr.dtype.kind in "iu" else "f8"
        lines.append(f"param {name} {kind} {arr.ndim} " + " ".join(map(str, arr.shape)))
        lines.append(_fmt_array(arr))
    lines.append("end")
    return "\n".join(lines) + "\n"


def loads_model(text: str) -> TrainedModel:
    lines = text.splitlines()
    if not lines or lines[0] != FORMAT_HEADER:
        raise ValueError("not a churnvec model artifact (or unsupported version)")
    spec_d = json.loads(lines[2][len("spec "):])
    meta = json.loads(lines[3][len("meta "):])
    spec = EstimatorSpec(Family.parse(spec_d["family"]), Task(spec_d["task"]),
                         spec_d["hyperparameters"], spec_d["rng_seed"])
    params = {}
    i = 4
    while lines[i] != "end":
        _, name, kind, ndim, *dims = lines[i].split()
        shape = tuple(int(d) for d in dims[:int(ndim)])
        body = lines[i + 1].split()
        dtype = np.int64 if kind == "i8" else float
        params[name] = np.array([dtype(v) if kind == "i8" else float(v) for v in body], dtype=dtype).reshape(shape)
        i += 2
    return TrainedModel(spec, params, meta)


def save_model(model: TrainedModel, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_model(model))


def load_model(path) -> TrainedModel:
    with open(path, encoding="utf-8") as fh:
        return loads_model(fh.read())


__all__ = [
    "Family", "Task", "EstimatorSpec", "TrainedModel", "Prediction", "TrainingDiverged",
    "FAMILY_ORDER", "SEQUENCE_FAMILIES", "NETWORK_FAMILIES", "DEFAULT_HYPERPARAMS",
    "fit", "predict", "raw_scores", "dumps_model", "loads_model", "save_model", "load_model",
    "build_network",
]
