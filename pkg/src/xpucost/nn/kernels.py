"""Kernel backend selection.

The compiled extension is preferred when it imports cleanly; otherwise the
numpy fallback is used.  Set ``XPUCOST_BACKEND=numpy`` or
``XPUCOST_BACKEND=cython`` to force a choice (forcing an unavailable
backend is an error).  Both backends implement the same signatures and
agree to floating-point roundoff; see benchmarks/bench_kernels.py for the
speed comparison.
"""

from __future__ import annotations

import os

from . import kernels_np


def _load_backend():
    requested = os.environ.get("XPUCOST_BACKEND", "auto").lower()
    if requested not in ("auto", "cython", "numpy"):
        raise RuntimeError(
            f"XPUCOST_BACKEND={requested!r}: expected auto, cython, or numpy"
        )
    if requested == "numpy":
        return kernels_np, "numpy"
    try:
        from . import _ckernels  # noqa: PLC0415

        return _ckernels, "cython"
    except ImportError:
        if requested == "cython":
            raise RuntimeError(
                "XPUCOST_BACKEND=cython but the compiled extension is not available"
            ) from None
        return kernels_np, "numpy"


_impl, BACKEND = _load_backend()

conv1d_fwd = _impl.conv1d_fwd
conv1d_bwd = _impl.conv1d_bwd
dense_fwd = _impl.dense_fwd
dense_bwd = _impl.dense_bwd
maxpool1d_fwd = _impl.maxpool1d_fwd
maxpool1d_bwd = _impl.maxpool1d_bwd
embedding_fwd = _impl.embedding_fwd
embedding_bwd = _impl.embedding_bwd
