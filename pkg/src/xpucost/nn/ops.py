"""Functional forward/backward operations and optimizer steps.

Single-instance signatures (sequences are [length, channels]); the layer
classes in :mod:`xpucost.nn.layers` batch these over [batch, length,
channels] via the kernel backend.  Everything is float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import IdOutOfRangeError, SequenceTooShortError, ShapeMismatchError
from . import kernels


def _ids_array(ids) -> np.ndarray:
    raw = getattr(ids, "ids", ids)
    return np.asarray(raw, dtype=np.int64)


def embedding_forward(ids, table: np.ndarray) -> np.ndarray:
    """Look up one embedding row per token id -> [len, embed_dim]."""
    idx = _ids_array(ids)
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise IdOutOfRangeError(
            f"token id outside [0, {table.shape[0]}): min {idx.min()}, max {idx.max()}"
        )
    return kernels.embedding_fwd(idx[None, :], np.ascontiguousarray(table))[0]


def embedding_backward(ids, dy: np.ndarray, vocab_size: int) -> np.ndarray:
    idx = _ids_array(ids)
    return kernels.embedding_bwd(idx[None, :], np.ascontiguousarray(dy[None]), vocab_size)


def conv1d_forward(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Valid cross-correlation of [len, in_ch] with [out_ch, in_ch, k]."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeMismatchError(f"expected [len, channels], got shape {x.shape}")
    if x.shape[1] != kernel.shape[1]:
        raise ShapeMismatchError(
            f"input has {x.shape[1]} channels, kernel expects {kernel.shape[1]}"
        )
    if x.shape[0] < kernel.shape[2]:
        raise SequenceTooShortError(
            f"sequence of length {x.shape[0]} shorter than kernel size {kernel.shape[2]}"
        )
    return kernels.conv1d_fwd(
        np.ascontiguousarray(x[None]),
        np.ascontiguousarray(kernel),
        np.ascontiguousarray(bias),
    )[0]


def conv1d_backward(x, kernel, dy) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    dx, dw, db = kernels.conv1d_bwd(
        np.ascontiguousarray(np.asarray(x, dtype=np.float64)[None]),
        np.ascontiguousarray(kernel),
        np.ascontiguousarray(np.asarray(dy, dtype=np.float64)[None]),
    )
    return dx[0], dw, db


def maxpool1d_forward(
    x: np.ndarray, window: int | None = None, stride: int | None = None
) -> np.ndarray:
    """Per-channel max over each window; window=None pools globally."""
    x = np.asarray(x, dtype=np.float64)
    window = x.shape[0] if window is None else window
    stride = window if stride is None else stride
    if x.shape[0] < window:
        raise SequenceTooShortError(
            f"sequence of length {x.shape[0]} shorter than pool window {window}"
        )
    y, _ = kernels.maxpool1d_fwd(np.ascontiguousarray(x[None]), window, stride)
    return y[0]


def maxpool1d_backward(
    x: np.ndarray, dy: np.ndarray, window: int | None = None, stride: int | None = None
) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    window = x.shape[0] if window is None else window
    stride = window if stride is None else stride
    _, pos = kernels.maxpool1d_fwd(np.ascontiguousarray(x[None]), window, stride)
    return kernels.maxpool1d_bwd(
        np.ascontiguousarray(np.asarray(dy, dtype=np.float64)[None]), pos, x.shape[0]
    )[0]


def dense_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Affine map with weight [out, in]; x may be [in] or [batch, in]."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    xb = x[None] if single else x
    if xb.shape[1] != weight.shape[1]:
        raise ShapeMismatchError(
            f"input features {xb.shape[1]} do not match weight {weight.shape}"
        )
    y = kernels.dense_fwd(
        np.ascontiguousarray(xb), np.ascontiguousarray(weight), np.ascontiguousarray(bias)
    )
    return y[0] if single else y


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def relu_backward(x: np.ndarray, dy: np.ndarray) -> np.ndarray:
    # subgradient at 0 is 0
    return np.where(np.asarray(x) > 0, dy, 0.0)


def mse_loss(pred: np.ndarray, target: np.ndarray) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeMismatchError(f"prediction {pred.shape} vs target {target.shape}")
    diff = pred - target
    return float(np.mean(diff * diff))


def mse_loss_backward(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeMismatchError(f"prediction {pred.shape} vs target {target.shape}")
    return 2.0 * (pred - target) / pred.size


# --- optimizers -----------------------------------------------------------


def _check_pairs(params, grads):
    if len(params) != len(grads):
        raise ShapeMismatchError(f"{len(params)} params vs {len(grads)} grads")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ShapeMismatchError(f"param {p.shape} vs grad {g.shape}")


def sgd_step(params: list[np.ndarray], grads: list[np.ndarray], lr: float) -> list[np.ndarray]:
    _check_pairs(params, grads)
    return [p - lr * g for p, g in zip(params, grads)]


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: list[np.ndarray]) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], 0)


def adam_step(
    params: list[np.ndarray],
    state: AdamState,
    grads: list[np.ndarray],
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[list[np.ndarray], AdamState]:
    _check_pairs(params, grads)
    t = state.t + 1
    new_m, new_v, out = [], [], []
    correct1 = 1.0 - beta1**t
    correct2 = 1.0 - beta2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * (g * g)
        step = lr * (m / correct1) / (np.sqrt(v / correct2) + eps)
        new_m.append(m)
        new_v.append(v)
        out.append(p - step)
    return out, AdamState(new_m, new_v, t)


# --- gradient checking ------------------------------------------------------


def grad_check(loss_and_grad, params: list[np.ndarray], eps: float = 1e-4) -> float:
    """Max relative error between reverse-mode and central-difference grads.

    ``loss_and_grad(params)`` must return ``(loss, grads)`` and be
    deterministic.  Every parameter element is probed, so keep the instance
    small.
    """
    _, grads = loss_and_grad(params)
    worst = 0.0
    for i, p in enumerate(params):
        flat = p.reshape(-1)
        g = np.asarray(grads[i]).reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            probe = [q.copy() for q in params]
            probe[i].reshape(-1)[j] = orig + eps
            hi, _ = loss_and_grad(probe)
            probe[i].reshape(-1)[j] = orig - eps
            lo, _ = loss_and_grad(probe)
            fd = (hi - lo) / (2.0 * eps)
            err = abs(fd - g[j]) / max(abs(fd), abs(g[j]), 1e-8)
            worst = max(worst, err)
    return worst
