"""Feed-forward and sequence networks with hand-written backpropagation.

Every network maps its input to one raw score per example. Regression uses
``0.5 * mean((z - y)^2)``; classification uses the logistic loss on ``z``
with ``sigmoid(z)`` as the probability.

Sequence inputs are ``X`` of shape (n, W, F) and a 0/1 ``mask`` of shape
(n, W). Masked steps are zeroed on entry, recurrent states do not move on
them, and attention gives them weight exactly 0.
"""
from __future__ import annotations

import math

import numpy as np


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, loss: float):
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"training diverged at epoch {epoch} (loss={loss})")


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def relu(z):
    return np.maximum(z, 0.0)


def _normal(rng, shape, fan_in, gain=1.0):
    return rng.normal(0.0, gain / math.sqrt(max(fan_in, 1)), size=shape)


def _check_mask(mask):
    if np.any(mask.sum(axis=1) == 0):
        raise ValueError("every window needs at least one observed step")


def _masked_input(X, mask):
    return np.where(mask[..., None] > 0, X, 0.0)


class MLP:
    sequence = False

    def __init__(self, hidden=(64, 64)):
        self.hidden = tuple(int(h) for h in hidden)

    def init_params(self, rng, n_in):
        params = {}
        sizes = (n_in, *self.hidden)
        for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            params[f"W{i}"] = _normal(rng, (a, b), a, math.sqrt(2.0))
            params[f"b{i}"] = np.zeros(b)
        params["w_out"] = _normal(rng, (sizes[-1],), sizes[-1])
        params["b_out"] = np.zeros(1)
        return params

    def forward(self, params, X, mask=None):
        acts = [X]
        pre = []
        a = X
        for i in range(len(self.hidden)):
            z = a @ params[f"W{i}"] + params[f"b{i}"]
            a = relu(z)
            pre.append(z)
            acts.append(a)
        out = a @ params["w_out"] + params["b_out"][0]
        return out, (acts, pre)

    def backward(self, params, cache, dout):
        acts, pre = cache
        grads = {"w_out": acts[-1].T @ dout, "b_out": np.array([dout.sum()])}
        da = np.outer(dout, params["w_out"])
        for i in reversed(range(len(self.hidden))):
            dz = da * (pre[i] > 0)
            grads[f"W{i}"] = acts[i].T @ dz
            grads[f"b{i}"] = dz.sum(axis=0)
            if i:
                da = dz @ params[f"W{i}"].T
        return grads


class Cnn1d:
    """Causal 1-D convolution over time, ReLU, masked mean + last-step pooling, dense head."""

    sequence = True

    def __init__(self, filters=16, kernel=3, hidden=32):
        self.filters = int(filters)
        self.kernel = int(kernel)
        self.hidden = int(hidden)

    def init_params(self, rng, n_in):
        k, C, H = self.kernel, self.filters, self.hidden
        return {
            "W_conv": _normal(rng, (k * n_in, C), k * n_in, math.sqrt(2.0)),
            "b_conv": np.zeros(C),
            "W_dense": _normal(rng, (2 * C, H), 2 * C, math.sqrt(2.0)),
            "b_dense": np.zeros(H),
            "w_out": _normal(rng, (H,), H),
            "b_out": np.zeros(1),
        }

    def _columns(self, X):
        n, W, F = X.shape
        k = self.kernel
        Xp = np.concatenate([np.zeros((n, k - 1, F)), X], axis=1)
        return np.concatenate([Xp[:, j:j + W, :] for j in range(k)], axis=2)

    def forward(self, params, X, mask):
        _check_mask(mask)
        X = _masked_input(X, mask)
        cols = self._columns(X)
        conv = cols @ params["W_conv"] + params["b_conv"]
        a = relu(conv)
        m = (mask > 0).astype(float)
        count = m.sum(axis=1, keepdims=True)
        mean = np.einsum("nwc,nw->nc", a, m) / count
        last = a[:, -1, :] * m[:, -1:]
        feat = np.concatenate([mean, last], axis=1)
        zd = feat @ params["W_dense"] + params["b_dense"]
        hd = relu(zd)
        out = hd @ params["w_out"] + params["b_out"][0]
        return out, (cols, conv, m, count, feat, zd, hd)

    def backward(self, params, cache, dout):
        cols, conv, m, count, feat, zd, hd = cache
        C = self.filters
        g = {"w_out": hd.T @ dout, "b_out": np.array([dout.sum()])}
        dzd = np.outer(dout, params["w_out"]) * (zd > 0)
        g["W_dense"] = feat.T @ dzd
        g["b_dense"] = dzd.sum(axis=0)
        dfeat = dzd @ params["W_dense"].T
        dmean, dlast = dfeat[:, :C], dfeat[:, C:]
        da = (m / count)[:, :, None] * dmean[:, None, :]
        da[:, -1, :] += dlast * m[:, -1:]
        dconv = da * (conv > 0)
        g["W_conv"] = np.einsum("nwk,nwc->kc", cols, dconv)
        g["b_conv"] = dconv.sum(axis=(0, 1))
        return g


class Rnn:
    """Single tanh recurrent layer; the final state feeds a linear head."""

    sequence = True

    def __init__(self, hidden=16):
        self.hidden = int(hidden)

    def init_params(self, rng, n_in):
        H = self.hidden
        return {
            "W_x": _normal(rng, (n_in, H), n_in),
            "W_h": _normal(rng, (H, H), H),
            "b": np.zeros(H),
            "w_out": _normal(rng, (H,), H),
            "b_out": np.zeros(1),
        }

    def forward(self, params, X, mask):
        _check_mask(mask)
        X = _masked_input(X, mask)
        n, W, _ = X.shape
        h = np.zeros((n, self.hidden))
        steps = []
        xw = X @ params["W_x"] + params["b"]
        for t in range(W):
            hn = np.tanh(xw[:, t] + h @ params["W_h"])
            m = mask[:, t:t + 1] > 0
            steps.append((h, hn, m))
            h = np.where(m, hn, h)
        out = h @ params["w_out"] + params["b_out"][0]
        return out, (X, steps, h)

    def backward(self, params, cache, dout):
        X, steps, h = cache
        g = {"w_out": h.T @ dout, "b_out": np.array([dout.sum()])}
        dWx = np.zeros_like(params["W_x"])
        dWh = np.zeros_like(params["W_h"])
        db = np.zeros_like(params["b"])
        dh = np.outer(dout, params["w_out"])
        for t in reversed(range(len(steps))):
            h_prev, hn, m = steps[t]
            da = np.where(m, dh, 0.0) * (1.0 - hn**2)
            dWx += X[:, t].T @ da
            dWh += h_prev.T @ da
            db += da.sum(axis=0)
            dh = da @ params["W_h"].T + np.where(m, 0.0, dh)
        g.update(W_x=dWx, W_h=dWh, b=db)
        return g


class _LstmEncoder:
    """Standard LSTM cell (input, forget, cell, output gates) with masked state freeze."""

    def _init_lstm(self, rng, n_in):
        H = self.hidden
        b = np.zeros(4 * H)
        b[H:2 * H] = 1.0  # forget-gate bias
        return {
            "W_x": _normal(rng, (n_in, 4 * H), n_in),
            "W_h": _normal(rng, (H, 4 * H), H),
            "b": b,
        }

    def _encode(self, params, X, mask):
        n, W, _ = X.shape
        H = self.hidden
        h = np.zeros((n, H))
        c = np.zeros((n, H))
        xw = X @ params["W_x"] + params["b"]
        states = np.zeros((n, W, H))
        steps = []
        for t in range(W):
            a = xw[:, t] + h @ params["W_h"]
            sg = sigmoid(a)
            i, f, o = sg[:, :H], sg[:, H:2 * H], sg[:, 3 * H:]
            gg = np.tanh(a[:, 2 * H:3 * H])
            cn = f * c + i * gg
            tc = np.tanh(cn)
            hn = o * tc
            m = mask[:, t:t + 1] > 0
            steps.append((h, c, i, f, gg, o, tc, m))
            h = np.where(m, hn, h)
            c = np.where(m, cn, c)
            states[:, t] = h
        return states, steps

    def _encode_backward(self, params, X, steps, dstates):
        H = self.hidden
        n = X.shape[0]
        W = len(steps)
        dA = np.empty((n, W, 4 * H))
        h_prevs = np.empty((n, W, H))
        dh = np.zeros((n, H))
        dc = np.zeros((n, H))
        for t in reversed(range(W)):
            h_prev, c_prev, i, f, gg, o, tc, m = steps[t]
            dh = dh + dstates[:, t]
            dhn = np.where(m, dh, 0.0)
            dcn = np.where(m, dc, 0.0) + dhn * o * (1.0 - tc**2)
            da = dA[:, t]
            da[:, :H] = dcn * gg * i * (1.0 - i)
            da[:, H:2 * H] = dcn * c_prev * f * (1.0 - f)
            da[:, 2 * H:3 * H] = dcn * i * (1.0 - gg**2)
            da[:, 3 * H:] = dhn * tc * o * (1.0 - o)
            h_prevs[:, t] = h_prev
            dh = da @ params["W_h"].T + np.where(m, 0.0, dh)
            dc = dcn * f + np.where(m, 0.0, dc)
        flat = dA.reshape(-1, 4 * H)
        return {"W_x": X.reshape(-1, X.shape[-1]).T @ flat,
                "W_h": h_prevs.reshape(-1, H).T @ flat,
                "b": flat.sum(axis=0)}


class Lstm(_LstmEncoder):
    sequence = True

    def __init__(self, hidden=16):
        self.hidden = int(hidden)

    def init_params(self, rng, n_in):
        params = self._init_lstm(rng, n_in)
        params["w_out"] = _normal(rng, (self.hidden,), self.hidden)
        params["b_out"] = np.zeros(1)
        return params

    def forward(self, params, X, mask):
        _check_mask(mask)
        X = _masked_input(X, mask)
        states, steps = self._encode(params, X, mask)
        h = states[:, -1]
        return h @ params["w_out"] + params["b_out"][0], (X, steps, states)

    def backward(self, params, cache, dout):
        X, steps, states = cache
        dstates = np.zeros_like(states)
        dstates[:, -1] = np.outer(dout, params["w_out"])
        g = self._encode_backward(params, X, steps, dstates)
        g["w_out"] = states[:, -1].T @ dout
        g["b_out"] = np.array([dout.sum()])
        return g


class AttentionNet(_LstmEncoder):
    """LSTM encoder with scaled dot-product attention pooling.

    The query is a projection of the final state, keys are projections of
    every state; the head reads ``[context, final_state]``.
    """

    sequence = True

    def __init__(self, hidden=16, attn_dim=None):
        self.hidden = int(hidden)
        self.attn_dim = int(attn_dim or hidden)

    def init_params(self, rng, n_in):
        H, d = self.hidden, self.attn_dim
        params = self._init_lstm(rng, n_in)
        params["W_q"] = _normal(rng, (H, d), H)
        params["W_k"] = _normal(rng, (H, d), H)
        params["w_out"] = _normal(rng, (2 * H,), 2 * H)
        params["b_out"] = np.zeros(1)
        return params

    def attention(self, params, states, mask):
        scale = 1.0 / math.sqrt(self.attn_dim)
        q = states[:, -1] @ params["W_q"]
        K = states @ params["W_k"]
        s = np.einsum("nwd,nd->nw", K, q) * scale
        s = np.where(mask > 0, s, -np.inf)
        s = s - s.max(axis=1, keepdims=True)
        e = np.exp(s)
        alpha = e / e.sum(axis=1, keepdims=True)
        return alpha, q, K

    def forward(self, params, X, mask):
        _check_mask(mask)
        X = _masked_input(X, mask)
        states, steps = self._encode(params, X, mask)
        alpha, q, K = self.attention(params, states, mask)
        ctx = np.einsum("nw,nwh->nh", alpha, states)
        feat = np.concatenate([ctx, states[:, -1]], axis=1)
        out = feat @ params["w_out"] + params["b_out"][0]
        return out, (X, steps, states, alpha, q, K, feat)

    def backward(self, params, cache, dout):
        X, steps, states, alpha, q, K, feat = cache
        H = self.hidden
        scale = 1.0 / math.sqrt(self.attn_dim)
        g = {"w_out": feat.T @ dout, "b_out": np.array([dout.sum()])}
        dfeat = np.outer(dout, params["w_out"])
        dctx, dlast = dfeat[:, :H], dfeat[:, H:]
        dalpha = np.einsum("nwh,nh->nw", states, dctx)
        dstates = alpha[:, :, None] * dctx[:, None, :]
        ds = alpha * (dalpha - np.sum(alpha * dalpha, axis=1, keepdims=True))
        dK = ds[:, :, None] * q[:, None, :] * scale
        dq = np.einsum("nw,nwd->nd", ds, K) * scale
        g["W_k"] = np.einsum("nwh,nwd->hd", states, dK)
        dstates += dK @ params["W_k"].T
        g["W_q"] = states[:, -1].T @ dq
        dstates[:, -1] += dlast + dq @ params["W_q"].T
        g.update(self._encode_backward(params, X, steps, dstates))
        return g


def head_loss(z, y, task):
    """Mean loss and its gradient with respect to the raw scores."""
    n = len(z)
    if task == "classification":
        loss = np.mean(np.logaddexp(0.0, z) - y * z)
        return float(loss), (sigmoid(z) - y) / n
    r = z - y
    return float(0.5 * np.mean(r**2)), r / n


def loss_and_grads(net, params, X, mask, y, task):
    z, cache = net.forward(params, X, mask)
    loss, dz = head_loss(z, y, task)
    return loss, net.backward(params, cache, dz)


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for k, gk in grads.items():
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * gk
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * gk * gk
            params[k] = params[k] - self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def train_network(net, params, X, mask, y, task, lr=3e-3, epochs=20, batch_size=64, seed=0,
                  stretch=10, stretch_tol=0.1):
    """Mini-batch training with Adam and seeded shuffling.

    The step size follows a cosine decay from ``lr`` down to ``lr / 10`` at
    the last epoch. Returns the per-epoch mean training loss. Raises
    ``TrainingDiverged`` if
    the loss turns non-finite, or if it ends a ``stretch``-epoch span more
    than ``stretch_tol`` (relative) above where it started.
    """
    rng = np.random.default_rng(seed)
    opt = Adam(params, lr)
    n = len(y)
    history = []
    for epoch in range(epochs):
        frac = epoch / max(epochs - 1, 1)
        opt.lr = lr * (0.1 + 0.45 * (1.0 + math.cos(math.pi * frac)))
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            mb = mask[idx] if mask is not None else None
            loss, grads = loss_and_grads(net, params, X[idx], mb, y[idx], task)
            if not np.isfinite(loss):
                raise TrainingDiverged(epoch, loss)
            opt.step(params, grads)
            total += loss * len(idx)
        history.append(total / n)
        if not np.isfinite(history[-1]):
            raise TrainingDiverged(epoch, history[-1])
        if epoch >= stretch:
            before = history[epoch - stretch]
            if history[-1] > before + stretch_tol * abs(before) + 1e-12:
                raise TrainingDiverged(epoch, history[-1])
    return history


def relative_error(a, b, floor=1e-6):
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def gradient_check(net, params, X, mask, y, task, h=1e-5, max_coords=None, seed=0):
    """Largest relative error between backprop and central differences.

    Every coordinate of every parameter is checked unless ``max_coords`` is
    given, in which case a seeded sample of at least ``max(max_coords, 200)``
    coordinates is spread over the tensors in proportion to their size.
    Relative error is ``|a - n| / max(|a|, |n|, 1e-6)``.
    """
    params = {k: np.array(v, dtype=float) for k, v in params.items()}
    _, grads = loss_and_grads(net, params, X, mask, y, task)
    sizes = {k: v.size for k, v in params.items()}
    total = sum(sizes.values())
    rng = np.random.default_rng(seed)
    budget = None if max_coords is None or max_coords >= total else max(max_coords, 200)
    worst = 0.0
    for k, p in params.items():
        flat = p.reshape(-1)
        if budget is None:
            coords = np.arange(flat.size)
        else:
            take = min(flat.size, max(1, int(math.ceil(budget * flat.size / total))))
            coords = np.sort(rng.choice(flat.size, take, replace=False))
        g = grads[k].reshape(-1)
        for j in coords:
            old = flat[j]
            flat[j] = old + h
            lp, _ = loss_and_grads(net, params, X, mask, y, task)
            flat[j] = old - h
            lm, _ = loss_and_grads(net, params, X, mask, y, task)
            flat[j] = old
            num = (lp - lm) / (2 * h)
            worst = max(worst, float(relative_error(g[j], num)))
    return worst
