"""Numpy implementations of the hot kernels.

This is the fallback backend; `xpucost.nn._ckernels` provides the same
functions as a compiled extension.  All arrays are float64, batch-major:
sequences are [batch, length, channels].

Convolutions are "valid" (no padding) cross-correlations, computed as one
GEMM per kernel tap on a shifted view of the input, which avoids an im2col
copy.
"""

from __future__ import annotations

import numpy as np


def conv1d_fwd(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    # x [B,L,C], w [O,C,K], b [O] -> [B, L-K+1, O]
    _, length, _ = x.shape
    out_ch, _, k = w.shape
    t = length - k + 1
    y = np.broadcast_to(b, (x.shape[0], t, out_ch)).copy()
    for j in range(k):
        y += x[:, j : j + t, :] @ w[:, :, j].T
    return y


def conv1d_bwd(
    x: np.ndarray, w: np.ndarray, dy: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    _, length, _ = x.shape
    _, _, k = w.shape
    t = length - k + 1
    dx = np.zeros_like(x)
    dw = np.empty_like(w)
    for j in range(k):
        dx[:, j : j + t, :] += dy @ w[:, :, j]
        dw[:, :, j] = np.tensordot(dy, x[:, j : j + t, :], axes=([0, 1], [0, 1]))
    db = dy.sum(axis=(0, 1))
    return dx, dw, db


def dense_fwd(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    # x [B,F], w [O,F], b [O] -> [B,O]
    return x @ w.T + b


def dense_bwd(
    x: np.ndarray, w: np.ndarray, dy: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return dy @ w, dy.T @ x, dy.sum(axis=0)


def maxpool1d_fwd(
    x: np.ndarray, window: int, stride: int
) -> tuple[np.ndarray, np.ndarray]:
    # x [B,L,C] -> (y [B,T,C], positions [B,T,C] of each max along L)
    length = x.shape[1]
    t = (length - window) // stride + 1
    views = np.lib.stride_tricks.sliding_window_view(x, window, axis=1)[:, ::stride]
    local = views.argmax(axis=3)  # first index on ties
    pos = local + (np.arange(t) * stride)[None, :, None]
    y = np.take_along_axis(views, local[..., None], axis=3)[..., 0]
    return y, pos.astype(np.int64)


def maxpool1d_bwd(dy: np.ndarray, pos: np.ndarray, length: int) -> np.ndarray:
    batch, t, ch = dy.shape
    dx = np.zeros((batch, length, ch))
    b_idx = np.arange(batch)[:, None, None]
    c_idx = np.arange(ch)[None, None, :]
    np.add.at(dx, (b_idx, pos, c_idx), dy)
    return dx


def embedding_fwd(ids: np.ndarray, table: np.ndarray) -> np.ndarray:
    return table[ids]


def embedding_bwd(ids: np.ndarray, dy: np.ndarray, vocab_size: int) -> np.ndarray:
    dim = dy.shape[-1]
    dtable = np.zeros((vocab_size, dim))
    np.add.at(dtable, ids.reshape(-1), dy.reshape(-1, dim))
    return dtable
