"""LASSO by cyclic coordinate descent and a primal linear SVM."""
from __future__ import annotations

import numpy as np


def soft_threshold(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def lasso_objective(X, y, coef, intercept, lam):
    r = y - X @ coef - intercept
    return 0.5 * np.mean(r**2) + lam * np.sum(np.abs(coef))


def fit_lasso_coordinate_descent(X, y, lam, tol=1e-10, max_iter=100_000):
    """Minimize ``mean((y - Xw - b)^2)/2 + lam * |w|_1``.

    The intercept is profiled out by centering. Each sweep updates every
    coordinate once using a Gram-matrix gradient cache; iteration stops when
    the largest coefficient change in a sweep falls below ``tol``.

    Returns ``(coef, intercept, objective_per_sweep)``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("lasso inputs must be finite")
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    n, d = X.shape
    x_mean = X.mean(axis=0)
    y_mean = y.mean()
    Xc = X - x_mean
    yc = y - y_mean
    gram = Xc.T @ Xc / n
    corr = Xc.T @ yc / n
    diag = np.diag(gram).copy()
    w = np.zeros(d)
    grad = corr.copy()  # X^T r / n with r = yc - Xc w
    history = [lasso_objective(Xc, yc, w, 0.0, lam)]
    for _ in range(max_iter):
        max_change = 0.0
        for j in range(d):
            if diag[j] <= 0.0:
                continue
            old = w[j]
            new = soft_threshold(grad[j] + diag[j] * old, lam) / diag[j]
            if new != old:
                grad -= gram[:, j] * (new - old)
                w[j] = new
                max_change = max(max_change, abs(new - old))
        history.append(lasso_objective(Xc, yc, w, 0.0, lam))
        if max_change < tol:
            break
    intercept = y_mean - x_mean @ w
    return w, intercept, np.array(history)


def lasso_kkt_violation(X, y, coef, intercept, lam):
    """Largest breach of the lasso optimality conditions.

    Zero coefficients need ``|x_j^T r / n| <= lam``; nonzero ones need
    ``x_j^T r / n = lam * sign(w_j)``.
    """
    r = y - X @ coef - intercept
    g = (X - X.mean(axis=0)).T @ r / len(y)
    zero = coef == 0
    v_zero = np.maximum(np.abs(g[zero]) - lam, 0.0)
    v_nz = np.abs(g[~zero] - lam * np.sign(coef[~zero]))
    return float(max(v_zero.max(initial=0.0), v_nz.max(initial=0.0)))


def fit_linear_svm(X, y, C=1.0, epochs=20, seed=0, task="classification",
                   epsilon=0.1, batch_size=32, eta_max=0.1):
    """Linear SVM by mini-batch primal subgradient descent.

    Minimizes ``(lam/2)|w|^2 + mean(loss)`` with ``lam = 1/C``. Classification
    uses the hinge loss on labels in {-1, +1}; regression uses the squared
    epsilon-insensitive loss. The step is ``1 / (lam * (t + t0))`` with ``t0``
    capping the first step at ``eta_max``; the bias is unregularized. Returns
    the iterate average ``(w, b)`` over all steps after the first epoch.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, d = X.shape
    if task == "classification":
        if not np.all(np.isin(y, (-1.0, 1.0))):
            raise ValueError("classification labels must be -1/+1")
        if len(np.unique(y)) < 2:
            raise ValueError("linear SVM needs both classes")
    if C <= 0:
        raise ValueError("C must be positive")
    lam = 1.0 / C
    t0 = max(1.0, 1.0 / (lam * eta_max))
    rng = np.random.default_rng(seed)
    w = np.zeros(d)
    b = 0.0
    w_sum = np.zeros(d)
    b_sum = 0.0
    n_avg = 0
    t = 0
    for epoch in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            xb, yb = X[idx], y[idx]
            f = xb @ w + b
            if task == "classification":
                active = yb * f < 1.0
                coef = -yb * active
            else:
                r = f - yb
                excess = np.maximum(np.abs(r) - epsilon, 0.0)
                coef = 2.0 * excess * np.sign(r)
            eta = 1.0 / (lam * (t + t0))
            gw = lam * w + coef @ xb / len(idx)
            gb = coef.mean()
            w = w - eta * gw
            b = b - eta * gb
            t += 1
            if epoch > 0 or epochs == 1:
                w_sum += w
                b_sum += b
                n_avg += 1
    return w_sum / n_avg, b_sum / n_avg
