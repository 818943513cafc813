"""CART trees, random forests and gradient boosting, numpy only.

A fitted tree is a set of parallel node arrays. Internal nodes send
``x[feature] <= threshold`` left. Leaves have ``feature == -1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LEAF = -1


@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def apply(self, X) -> np.ndarray:
        """Leaf index reached by every row."""
        X = np.asarray(X, dtype=float)
        node = np.zeros(len(X), dtype=np.int64)
        active = self.feature[node] != LEAF
        while active.any():
            idx = np.flatnonzero(active)
            nd = node[idx]
            go_left = X[idx, self.feature[nd]] <= self.threshold[nd]
            node[idx] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] != LEAF
        return node

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] != LEAF:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())


def _best_split(X, y, idx, features, min_leaf, criterion, presorted):
    """Best (gain, feature, threshold) over candidate features at one node.

    ``presorted`` is the column-wise argsort of the whole of ``X``; the node's
    sorted order is recovered by filtering it. Ties keep the lowest feature
    index, then the lowest threshold.
    """
    yn = y[idx]
    n = len(idx)
    best = (0.0, LEAF, 0.0)
    if n < 2 * min_leaf:
        return best
    features = np.asarray(features)
    total = yn.sum()
    if criterion == "gini":
        parent = n - total * total / n - (n - total) ** 2 / n
    else:
        parent = np.sum(yn**2) - total * total / n
    tol = 1e-12 * max(abs(parent), 1.0)
    if 8 * n >= len(y):
        member = np.zeros(len(y), dtype=bool)
        member[idx] = True
        cols = presorted[:, features]
        order = cols.T[member[cols.T]].reshape(len(features), n).T
    else:
        # small nodes: sorting the node directly is cheaper than filtering
        sub = X[np.ix_(idx, features)]
        order = idx[np.argsort(sub, axis=0, kind="stable")]
    xs = X[order, features]
    ys = y[order]
    # a split after sorted position k puts k+1 rows on the left
    csum = np.cumsum(ys, axis=0)[:-1]
    n_left = np.arange(1, n)[:, None]
    n_right = n - n_left
    rs = total - csum
    if criterion == "gini":
        child = n - (csum * csum + (n_left - csum) ** 2) / n_left - (rs * rs + (n_right - rs) ** 2) / n_right
    else:
        csq = np.cumsum(ys**2, axis=0)[:-1]
        child = (csq - csum * csum / n_left) + ((np.sum(yn**2) - csq) - rs * rs / n_right)
    valid = (xs[:-1] < xs[1:]) & (n_left >= min_leaf) & (n_right >= min_leaf)
    gain = np.where(valid, parent - child, -np.inf)
    k_best = np.argmax(gain, axis=0)
    g_best = gain[k_best, np.arange(len(features))]
    top = g_best.max()
    if not np.isfinite(top) or top <= tol:
        return best
    j = int(np.flatnonzero(g_best >= top - tol)[0])
    k = int(k_best[j])
    return float(g_best[j]), int(features[j]), 0.5 * (xs[k, j] + xs[k + 1, j])


def fit_cart(X, y, max_depth=None, min_leaf=1, task="regression", max_features=None, rng=None,
             presorted=None) -> Tree:
    """Greedy binary tree: variance reduction (regression) or Gini (classification).

    ``max_features`` limits the features tried at each split to a fresh
    random subset drawn from ``rng`` (random-forest mode). Leaf values are
    the mean target, i.e. the positive-class fraction for 0/1 labels.
    ``presorted`` may pass a cached stable column-wise argsort of ``X``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, d = X.shape
    if n == 0:
        raise ValueError("cannot fit a tree on empty data")
    if max_depth is None:
        max_depth = np.iinfo(np.int32).max
    min_leaf = max(1, int(min_leaf))
    criterion = "gini" if task == "classification" else "variance"
    k_feat = d if max_features is None else max(1, min(d, int(max_features)))
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(idx):
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        value.append(float(y[idx].mean()))
        return len(feature) - 1

    if presorted is None:
        presorted = np.argsort(X, axis=0, kind="stable")
    root = new_node(np.arange(n))
    stack = [(root, np.arange(n), 0)]
    while stack:
        node, idx, depth = stack.pop()
        if depth >= max_depth or len(idx) < 2 * min_leaf:
            continue
        yn = y[idx]
        if np.all(yn == yn[0]):
            continue
        if k_feat < d:
            cand = np.sort(rng.choice(d, k_feat, replace=False))
        else:
            cand = np.arange(d)
        gain, f, thr = _best_split(X, y, idx, cand, min_leaf, criterion, presorted)
        if f == LEAF or gain <= 0.0:
            continue
        go_left = X[idx, f] <= thr
        li, ri = idx[go_left], idx[~go_left]
        feature[node] = f
        threshold[node] = thr
        left[node] = new_node(li)
        right[node] = new_node(ri)
        # right pushed first so the left subtree is expanded first
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))
    return Tree(np.array(feature, dtype=np.int64), np.array(threshold), np.array(left, dtype=np.int64),
                np.array(right, dtype=np.int64), np.array(value))


@dataclass
class Forest:
    trees: list
    oob_masks: list = field(default_factory=list, repr=False)

    def predict(self, X) -> np.ndarray:
        return np.mean([t.predict(X) for t in self.trees], axis=0)


def tree_streams(seed: int, n_trees: int) -> list:
    """Independent per-tree generators, so tree k does not depend on tree order."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n_trees)]


def fit_random_forest(X, y, n_trees=50, feature_subsample=0.5, max_depth=None, min_leaf=1,
                      task="regression", seed=0, bootstrap=True) -> Forest:
    """Bagged CART trees with a random feature subset tried at every split.

    Regression averages tree outputs; classification averages the trees'
    leaf class fractions into a probability.
    """
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, d = X.shape
    k = max(1, int(round(feature_subsample * d)))
    trees, oob = [], []
    for rng in tree_streams(seed, n_trees):
        rows = rng.integers(0, n, n) if bootstrap else np.arange(n)
        mask = np.ones(n, dtype=bool)
        mask[rows] = False
        trees.append(fit_cart(X[rows], y[rows], max_depth, min_leaf, task, k, rng))
        oob.append(mask)
    return Forest(trees, oob)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass
class Boosted:
    base_score: float
    learning_rate: float
    trees: list
    task: str = "regression"
    train_loss: list = field(default_factory=list)

    def raw(self, X) -> np.ndarray:
        out = np.full(len(X), self.base_score)
        for t in self.trees:
            out = out + self.learning_rate * t.predict(X)
        return out

    def staged_raw(self, X):
        out = np.full(len(X), self.base_score)
        yield out
        for t in self.trees:
            out = out + self.learning_rate * t.predict(X)
            yield out

    def predict(self, X) -> np.ndarray:
        z = self.raw(X)
        return _sigmoid(z) if self.task == "classification" else z


def boosting_loss(y, raw, task):
    if task == "classification":
        return float(np.mean(np.logaddexp(0.0, raw) - y * raw))
    return float(0.5 * np.mean((y - raw) ** 2))


def fit_gbm(X, y, n_rounds=100, learning_rate=0.1, max_depth=3, min_leaf=1, task="regression") -> Boosted:
    """Stagewise trees on the negative gradient of squared or logistic loss.

    Tree structure is grown on the negative gradient; leaf values are the
    Newton step for the loss (mean residual for squared loss,
    ``sum(y - p) / sum(p(1 - p))`` for log loss).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if task == "classification":
        p = np.clip(y.mean(), 1e-12, 1 - 1e-12)
        base = float(np.log(p / (1 - p)))
    else:
        base = float(y.mean())
    model = Boosted(base, learning_rate, [], task)
    raw = np.full(len(y), base)
    model.train_loss.append(boosting_loss(y, raw, task))
    presorted = np.argsort(X, axis=0, kind="stable")
    for _ in range(n_rounds):
        if task == "classification":
            p = _sigmoid(raw)
            resid = y - p
            hess = p * (1 - p)
        else:
            resid = y - raw
            hess = np.ones_like(y)
        tree = fit_cart(X, resid, max_depth, min_leaf, "regression", presorted=presorted)
        leaves = tree.apply(X)
        num = np.bincount(leaves, weights=resid, minlength=tree.n_nodes)
        den = np.bincount(leaves, weights=hess, minlength=tree.n_nodes)
        used = den > 0
        tree.value = np.where(used, num / np.where(used, np.maximum(den, 1e-12), 1.0), 0.0)
        raw = raw + learning_rate * tree.value[leaves]
        model.trees.append(tree)
        model.train_loss.append(boosting_loss(y, raw, task))
    return model
