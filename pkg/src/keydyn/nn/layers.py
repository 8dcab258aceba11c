"""Layers with explicit forward/backward passes.

Every layer caches what its backward pass needs during ``forward`` and
accumulates parameter gradients into ``self.grads`` on ``backward``.
Sequence tensors are laid out (batch, time, channel).
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(x, axis=-1):
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def _uniform(rng, bound, shape, dtype):
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Layer:
    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def zero_grad(self):
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}

    def _acc(self, name, g):
        if name in self.grads:
            self.grads[name] += g
        else:
            self.grads[name] = g.astype(self.params[name].dtype, copy=True)


class Conv1d(Layer):
    """Zero right-padded 'same' convolution, weights shaped (k, c_in, c_out)."""

    def __init__(self, c_in, c_out, kernel_size, rng, dtype=np.float32):
        super().__init__()
        self.k = kernel_size
        bound = 1.0 / np.sqrt(c_in * kernel_size)
        self.params = {"W": _uniform(rng, bound, (kernel_size, c_in, c_out), dtype),
                       "b": _uniform(rng, bound, (c_out,), dtype)}

    def forward(self, x, training=False):
        B, L, C = x.shape
        W = self.params["W"]
        if W.shape[1] != C:
            raise ValueError(f"conv expects {W.shape[1]} input channels, got {C}")
        xp = np.pad(x, ((0, 0), (0, self.k - 1), (0, 0)))
        # (B, L, C, k) -> (B, L, k, C) so columns line up with W's (k, C) layout
        cols = sliding_window_view(xp, self.k, axis=1)[:, :L].transpose(0, 1, 3, 2)
        cols = cols.reshape(B * L, self.k * C)
        self._cache = (cols, x.shape)
        y = cols @ W.reshape(self.k * C, -1) + self.params["b"]
        return y.reshape(B, L, -1)

    def backward(self, dy):
        cols, (B, L, C) = self._cache
        W = self.params["W"]
        dyf = dy.reshape(B * L, -1)
        self._acc("W", (cols.T @ dyf).reshape(W.shape))
        self._acc("b", dyf.sum(axis=0))
        dcols = (dyf @ W.reshape(self.k * C, -1).T).reshape(B, L, self.k, C)
        dxp = np.zeros((B, L + self.k - 1, C), dtype=dy.dtype)
        for j in range(self.k):
            dxp[:, j:j + L] += dcols[:, :, j]
        return dxp[:, :L]


class ReLU(Layer):
    def forward(self, x, training=False):
        self._mask = x > 0
        return x * self._mask

    def backward(self, dy):
        return dy * self._mask


class GRU(Layer):
    """Single-layer unidirectional GRU starting from h0 = 0.

    Gate blocks in W, U and b are ordered (update, reset, candidate).
    """

    def __init__(self, c_in, hidden, rng, dtype=np.float32):
        super().__init__()
        self.H = hidden
        bound = 1.0 / np.sqrt(hidden)
        self.params = {"W": _uniform(rng, bound, (c_in, 3 * hidden), dtype),
                       "U": _uniform(rng, bound, (hidden, 3 * hidden), dtype),
                       "b": _uniform(rng, bound, (3 * hidden,), dtype)}

    def forward(self, x, training=False):
        B, L, _ = x.shape
        H = self.H
        W, U, b = self.params["W"], self.params["U"], self.params["b"]
        xp = x @ W + b
        Uzr, Uh = U[:, :2 * H], U[:, 2 * H:]
        h = np.zeros((B, H), dtype=xp.dtype)
        hs = np.empty((B, L, H), dtype=xp.dtype)
        zs, rs, cs, prev = (np.empty_like(hs) for _ in range(4))
        for t in range(L):
            zr = sigmoid(xp[:, t, :2 * H] + h @ Uzr)
            z, r = zr[:, :H], zr[:, H:]
            c = np.tanh(xp[:, t, 2 * H:] + (r * h) @ Uh)
            prev[:, t] = h
            h = (1 - z) * h + z * c
            zs[:, t], rs[:, t], cs[:, t], hs[:, t] = z, r, c, h
        self._cache = (x, zs, rs, cs, prev)
        return hs

    def backward(self, dhs):
        x, zs, rs, cs, prev = self._cache
        B, L, _ = x.shape
        H = self.H
        U = self.params["U"]
        Uz, Ur, Uh = U[:, :H], U[:, H:2 * H], U[:, 2 * H:]
        dxp = np.empty((B, L, 3 * H), dtype=dhs.dtype)
        dU = np.zeros_like(U)
        dh = np.zeros((B, H), dtype=dhs.dtype)
        for t in reversed(range(L)):
            dh = dh + dhs[:, t]
            z, r, c, hp = zs[:, t], rs[:, t], cs[:, t], prev[:, t]
            dc = dh * z
            da_h = dc * (1 - c * c)
            drh = da_h @ Uh.T
            da_r = drh * hp * r * (1 - r)
            da_z = dh * (c - hp) * z * (1 - z)
            dU[:, :H] += hp.T @ da_z
            dU[:, H:2 * H] += hp.T @ da_r
            dU[:, 2 * H:] += (r * hp).T @ da_h
            dh = dh * (1 - z) + drh * r + da_z @ Uz.T + da_r @ Ur.T
            dxp[:, t, :H], dxp[:, t, H:2 * H], dxp[:, t, 2 * H:] = da_z, da_r, da_h
        flat = dxp.reshape(B * L, -1)
        self._acc("W", x.reshape(B * L, -1).T @ flat)
        self._acc("U", dU)
        self._acc("b", flat.sum(axis=0))
        return dxp @ self.params["W"].T


class AttentionPool(Layer):
    """Additive attention over time: score_t = v . tanh(W h_t + b)."""

    def __init__(self, hidden, attn_dim, rng, dtype=np.float32):
        super().__init__()
        bound = 1.0 / np.sqrt(hidden)
        self.params = {"W": _uniform(rng, bound, (hidden, attn_dim), dtype),
                       "b": _uniform(rng, bound, (attn_dim,), dtype),
                       "v": _uniform(rng, 1.0 / np.sqrt(attn_dim), (attn_dim,), dtype)}

    def forward(self, h, training=False):
        u = np.tanh(h @ self.params["W"] + self.params["b"])
        alpha = softmax(u @ self.params["v"], axis=1)
        self._cache = (h, u, alpha)
        self.alpha = alpha
        return np.einsum("bl,blh->bh", alpha, h)

    def backward(self, dout):
        h, u, alpha = self._cache
        B, L, H = h.shape
        dalpha = np.einsum("bh,blh->bl", dout, h)
        dscore = alpha * (dalpha - np.sum(alpha * dalpha, axis=1, keepdims=True))
        self._acc("v", np.einsum("bl,bla->a", dscore, u))
        da = dscore[:, :, None] * self.params["v"] * (1 - u * u)
        daf = da.reshape(B * L, -1)
        self._acc("W", h.reshape(B * L, H).T @ daf)
        self._acc("b", daf.sum(axis=0))
        return alpha[:, :, None] * dout[:, None, :] + da @ self.params["W"].T


class LastStep(Layer):
    def forward(self, h, training=False):
        self._shape = h.shape
        return h[:, -1]

    def backward(self, dout):
        dh = np.zeros(self._shape, dtype=dout.dtype)
        dh[:, -1] = dout
        return dh


class Dense(Layer):
    def __init__(self, n_in, n_out, rng, dtype=np.float32):
        super().__init__()
        bound = 1.0 / np.sqrt(n_in)
        self.params = {"W": _uniform(rng, bound, (n_in, n_out), dtype),
                       "b": _uniform(rng, bound, (n_out,), dtype)}

    def forward(self, x, training=False):
        self._x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, dy):
        self._acc("W", self._x.T @ dy)
        self._acc("b", dy.sum(axis=0))
        return dy @ self.params["W"].T


class Dropout(Layer):
    """Inverted dropout; identity at inference or when rate is 0."""

    def __init__(self, rate, rng):
        super().__init__()
        if not 0 <= rate < 1:
            raise ValueError("dropout rate must be in [0, 1)")
        self.rate = rate
        self.rng = rng

    def forward(self, x, training=False):
        if not training or self.rate == 0:
            self._mask = None
            return x
        keep = self.rng.random(x.shape) >= self.rate
        self._mask = keep.astype(x.dtype) / (1 - self.rate)
        return x * self._mask

    def backward(self, dy):
        return dy if self._mask is None else dy * self._mask


def dropout(x, rate, training, seed):
    """Functional dropout with its own generator."""
    return Dropout(rate, np.random.default_rng(seed)).forward(x, training)
