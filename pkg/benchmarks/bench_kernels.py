#!/usr/bin/env python3
"""Benchmark the compiled kernel extension against the numpy fallback.

Runs each hot kernel forward+backward on training-shaped inputs and prints
a table of per-call times.  Usage:

    python benchmarks/bench_kernels.py [--repeats N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from xpucost.nn import kernels_np

try:
    from xpucost.nn import _ckernels
except ImportError:
    _ckernels = None

# training-shaped workloads: batch 32, ops-only sequences (length 64) and
# the operand-mode lengths (256), embedding width 64
CASES = {
    "conv1d len64": dict(kind="conv", b=32, length=64, c=64, o=64, k=2),
    "conv1d len256": dict(kind="conv", b=32, length=256, c=64, o=64, k=2),
    "dense 128->64": dict(kind="dense", b=32, f=128, o=64),
    "maxpool global": dict(kind="pool", b=32, length=58, c=64),
    "embedding 500x64": dict(kind="embed", b=32, length=64, v=500, d=64),
}


def build_inputs(case, rng):
    if case["kind"] == "conv":
        x = rng.standard_normal((case["b"], case["length"], case["c"]))
        w = rng.standard_normal((case["o"], case["c"], case["k"]))
        bias = rng.standard_normal(case["o"])
        dy = rng.standard_normal((case["b"], case["length"] - case["k"] + 1, case["o"]))
        return x, w, bias, dy
    if case["kind"] == "dense":
        x = rng.standard_normal((case["b"], case["f"]))
        w = rng.standard_normal((case["o"], case["f"]))
        bias = rng.standard_normal(case["o"])
        dy = rng.standard_normal((case["b"], case["o"]))
        return x, w, bias, dy
    if case["kind"] == "pool":
        x = rng.standard_normal((case["b"], case["length"], case["c"]))
        dy = rng.standard_normal((case["b"], 1, case["c"]))
        return x, dy
    x = rng.integers(0, case["v"], size=(case["b"], case["length"]))
    table = rng.standard_normal((case["v"], case["d"]))
    dy = rng.standard_normal((case["b"], case["length"], case["d"]))
    return x, table, dy


def run_case(mod, case, inputs, repeats):
    def once():
        if case["kind"] == "conv":
            x, w, bias, dy = inputs
            mod.conv1d_fwd(x, w, bias)
            mod.conv1d_bwd(x, w, dy)
        elif case["kind"] == "dense":
            x, w, bias, dy = inputs
            mod.dense_fwd(x, w, bias)
            mod.dense_bwd(x, w, dy)
        elif case["kind"] == "pool":
            x, dy = inputs
            _, pos = mod.maxpool1d_fwd(x, x.shape[1], x.shape[1])
            mod.maxpool1d_bwd(dy, pos, x.shape[1])
        else:
            ids, table, dy = inputs
            mod.embedding_fwd(ids, table)
            mod.embedding_bwd(ids, dy, table.shape[0])

    once()  # warm up
    start = time.perf_counter()
    for _ in range(repeats):
        once()
    return (time.perf_counter() - start) / repeats


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=50)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    rows = [("kernel (fwd+bwd)", "numpy", "cython", "speedup")]
    for name, case in CASES.items():
        inputs = build_inputs(case, rng)
        t_np = run_case(kernels_np, case, inputs, args.repeats)
        if _ckernels is not None:
            t_cy = run_case(_ckernels, case, inputs, args.repeats)
            rows.append((name, f"{t_np * 1e3:.3f} ms", f"{t_cy * 1e3:.3f} ms", f"{t_np / t_cy:.2f}x"))
        else:
            rows.append((name, f"{t_np * 1e3:.3f} ms", "n/a", "n/a"))

    widths = [max(len(r[i]) for r in rows) for i in range(4)]
    for r in rows:
        print("  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip())
    if _ckernels is None:
        print("\ncompiled extension not built; install with `pip install -e .`")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
