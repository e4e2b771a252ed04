"""Batched layers with explicit forward/backward, composed by the models.

Each layer keeps its parameters, accumulates gradients across backward
calls until ``zero_grads``, and caches whatever the backward pass needs.
Initialization is uniform(-sqrt(1/fan_in), sqrt(1/fan_in)) with zero biases,
drawn from the RNG passed in so model construction is reproducible.
"""

from __future__ import annotations

import numpy as np

from ..errors import SequenceTooShortError
from . import kernels


def _init_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = float(np.sqrt(1.0 / fan_in))
    return rng.uniform(-bound, bound, size=shape)


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class Layer:
    """Minimal interface: forward, backward, named parameters."""

    def params_named(self) -> list[tuple[str, np.ndarray]]:
        return []

    def grads_named(self) -> list[tuple[str, np.ndarray]]:
        return []

    def zero_grads(self) -> None:
        for _, g in self.grads_named():
            g[...] = 0.0


class Embedding(Layer):
    def __init__(self, vocab_size: int, dim: int, rng: np.random.Generator, name: str = "embedding"):
        self.name = name
        self.vocab_size = vocab_size
        self.w = _init_uniform(rng, (vocab_size, dim), dim)
        self.gw = np.zeros_like(self.w)
        self._ids: np.ndarray | None = None

    def forward(self, ids: np.ndarray) -> np.ndarray:
        self._ids = np.ascontiguousarray(ids, dtype=np.int64)
        return kernels.embedding_fwd(self._ids, self.w)

    def backward(self, dy: np.ndarray) -> None:
        self.gw += kernels.embedding_bwd(self._ids, np.ascontiguousarray(dy), self.vocab_size)

    def params_named(self):
        return [(f"{self.name}.w", self.w)]

    def grads_named(self):
        return [(f"{self.name}.w", self.gw)]


class Conv1D(Layer):
    def __init__(self, in_ch: int, out_ch: int, k: int, rng: np.random.Generator, name: str):
        self.name = name
        self.k = k
        self.w = _init_uniform(rng, (out_ch, in_ch, k), in_ch * k)
        self.b = np.zeros(out_ch)
        self.gw = np.zeros_like(self.w)
        self.gb = np.zeros_like(self.b)
        self._x: np.ndarray | None = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.shape[1] < self.k:
            raise SequenceTooShortError(
                f"{self.name}: length {x.shape[1]} < kernel size {self.k}"
            )
        self._x = np.ascontiguousarray(x)
        return kernels.conv1d_fwd(self._x, self.w, self.b)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        dx, dw, db = kernels.conv1d_bwd(self._x, self.w, np.ascontiguousarray(dy))
        self.gw += dw
        self.gb += db
        return dx

    def params_named(self):
        return [(f"{self.name}.w", self.w), (f"{self.name}.b", self.b)]

    def grads_named(self):
        return [(f"{self.name}.w", self.gw), (f"{self.name}.b", self.gb)]


class ReLU(Layer):
    def __init__(self):
        self._mask: np.ndarray | None = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return np.where(self._mask, dy, 0.0)


class MaxPool1D(Layer):
    """window=None pools globally over whatever length arrives."""

    def __init__(self, window: int | None = None, stride: int | None = None):
        self.window = window
        self.stride = stride
        self._pos: np.ndarray | None = None
        self._length = 0

    def forward(self, x: np.ndarray) -> np.ndarray:
        length = x.shape[1]
        window = length if self.window is None else self.window
        stride = window if self.stride is None else self.stride
        if length < window:
            raise SequenceTooShortError(f"length {length} < pool window {window}")
        y, self._pos = kernels.maxpool1d_fwd(np.ascontiguousarray(x), window, stride)
        self._length = length
        return y

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return kernels.maxpool1d_bwd(np.ascontiguousarray(dy), self._pos, self._length)


class Dense(Layer):
    def __init__(self, in_f: int, out_f: int, rng: np.random.Generator, name: str):
        self.name = name
        self.w = _init_uniform(rng, (out_f, in_f), in_f)
        self.b = np.zeros(out_f)
        self.gw = np.zeros_like(self.w)
        self.gb = np.zeros_like(self.b)
        self._x: np.ndarray | None = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = np.ascontiguousarray(x)
        return kernels.dense_fwd(self._x, self.w, self.b)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        dx, dw, db = kernels.dense_bwd(self._x, self.w, np.ascontiguousarray(dy))
        self.gw += dw
        self.gb += db
        return dx

    def params_named(self):
        return [(f"{self.name}.w", self.w), (f"{self.name}.b", self.b)]

    def grads_named(self):
        return [(f"{self.name}.w", self.gw), (f"{self.name}.b", self.gb)]


class GRU(Layer):
    """Single-layer gated recurrent cell, left to right.

    Gate order in the fused matrices is update | reset | candidate.
    ``forward`` returns the hidden state at each item's last real (non-PAD)
    step.
    """

    def __init__(self, in_dim: int, hidden: int, rng: np.random.Generator, name: str = "gru"):
        self.name = name
        self.hidden = hidden
        self.w = _init_uniform(rng, (in_dim, 3 * hidden), in_dim)
        self.u_zr = _init_uniform(rng, (hidden, 2 * hidden), hidden)
        self.u_n = _init_uniform(rng, (hidden, hidden), hidden)
        self.b = np.zeros(3 * hidden)
        self.gw = np.zeros_like(self.w)
        self.gu_zr = np.zeros_like(self.u_zr)
        self.gu_n = np.zeros_like(self.u_n)
        self.gb = np.zeros_like(self.b)
        self._cache = None

    def forward(self, x: np.ndarray, lengths: np.ndarray) -> np.ndarray:
        batch, steps, _ = x.shape
        h = self.hidden
        pre = x @ self.w + self.b  # [B, L, 3H]
        hs = np.zeros((steps + 1, batch, h))
        zs = np.empty((steps, batch, h))
        rs = np.empty((steps, batch, h))
        ns = np.empty((steps, batch, h))
        for t in range(steps):
            prev = hs[t]
            gates = prev @ self.u_zr  # [B, 2H]
            z = sigmoid(pre[:, t, :h] + gates[:, :h])
            r = sigmoid(pre[:, t, h : 2 * h] + gates[:, h:])
            n = np.tanh(pre[:, t, 2 * h :] + (r * prev) @ self.u_n)
            hs[t + 1] = (1.0 - z) * prev + z * n
            zs[t], rs[t], ns[t] = z, r, n
        last = np.clip(lengths, 1, steps)  # every sequence has at least BOS
        out = hs[last, np.arange(batch)]
        self._cache = (x, hs, zs, rs, ns, last)
        return out

    def backward(self, dout: np.ndarray) -> np.ndarray:
        x, hs, zs, rs, ns, last = self._cache
        batch, steps, _ = x.shape
        h = self.hidden
        dpre = np.zeros((batch, steps, 3 * h))
        dh = np.zeros((batch, h))
        for t in range(steps - 1, -1, -1):
            dh = dh + np.where((last == t + 1)[:, None], dout, 0.0)
            prev, z, r, n = hs[t], zs[t], rs[t], ns[t]
            dz = dh * (n - prev)
            dn = dh * z
            dprev = dh * (1.0 - z)
            dn_pre = dn * (1.0 - n * n)
            dpre[:, t, 2 * h :] = dn_pre
            drh = dn_pre @ self.u_n.T
            self.gu_n += (r * prev).T @ dn_pre
            dr = drh * prev
            dprev += drh * r
            dz_pre = dz * z * (1.0 - z)
            dr_pre = dr * r * (1.0 - r)
            dpre[:, t, :h] = dz_pre
            dpre[:, t, h : 2 * h] = dr_pre
            dgates = np.concatenate([dz_pre, dr_pre], axis=1)
            dprev += dgates @ self.u_zr.T
            self.gu_zr += prev.T @ dgates
            dh = dprev
        flat_x = x.reshape(-1, x.shape[2])
        flat_dpre = dpre.reshape(-1, 3 * h)
        self.gw += flat_x.T @ flat_dpre
        self.gb += flat_dpre.sum(axis=0)
        return (dpre @ self.w.T).reshape(x.shape)

    def params_named(self):
        return [
            (f"{self.name}.w", self.w),
            (f"{self.name}.u_zr", self.u_zr),
            (f"{self.name}.u_n", self.u_n),
            (f"{self.name}.b", self.b),
        ]

    def grads_named(self):
        return [
            (f"{self.name}.w", self.gw),
            (f"{self.name}.u_zr", self.gu_zr),
            (f"{self.name}.u_n", self.gu_n),
            (f"{self.name}.b", self.gb),
        ]
