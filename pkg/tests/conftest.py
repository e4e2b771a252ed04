"""Shared fixtures and reference implementations for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from xpucost import models
from xpucost.ir import DTYPE_BYTES, GraphFunction, bare_opcode
from xpucost.nn import layers as L
from xpucost.nn.ops import mse_loss, mse_loss_backward
from xpucost.oracle import MachineConfig

FIG2_TEXT = """\
func @fig2(%arg0: tensor<1x128xf32>, %arg1: tensor<1x128xf32>) -> (tensor<1x128xf32>) {
  %0 = xpu.mult %arg0, %arg1 : (tensor<1x128xf32>, tensor<1x128xf32>) -> tensor<1x128xf32>
  %1 = xpu.add %0, %arg1 : (tensor<1x128xf32>, tensor<1x128xf32>) -> tensor<1x128xf32>
  %2 = xpu.relu %1 : (tensor<1x128xf32>) -> tensor<1x128xf32>
  %3 = xpu.copy %2 : (tensor<1x128xf32>) -> tensor<1x128xf32>
  return %3
}
"""


@pytest.fixture
def machine() -> MachineConfig:
    return MachineConfig()


# --- independent oracle references ------------------------------------------
# Deliberately written as direct relational definitions over program points,
# not shared with the production liveness code.


def _footprint(shape, width: int) -> int:
    n = 1
    for d in shape.dims:
        n *= d
    total = n * DTYPE_BYTES[shape.dtype]
    return -(-total // width)


def brute_force_pressure(f: GraphFunction, machine: MachineConfig) -> int:
    n = len(f.body)
    shapes = dict(f.args)
    def_at = {name: 0 for name, _ in f.args}
    for i, op in enumerate(f.body):
        shapes[op.result_id] = op.result_shape
        def_at[op.result_id] = i + 1
    use_points: dict[str, list[int]] = {v: [] for v in shapes}
    for i, op in enumerate(f.body):
        for oid in op.operand_ids:
            use_points[oid].append(i + 1)
    for r in f.returns:
        use_points[r].append(n + 1)

    peak = 0
    for point in range(n + 2):
        live = [
            v
            for v in shapes
            if def_at[v] <= point and any(u >= point for u in use_points[v])
        ]
        peak = max(peak, sum(_footprint(shapes[v], machine.register_width_bytes) for v in live))
    return peak


def brute_force_utilization(f: GraphFunction, machine: MachineConfig) -> float:
    vec = 0
    total = 0
    for op in f.body:
        name = bare_opcode(op.opcode)
        total += machine.slot_cost[name]
        vec += machine.slot_cost[name] if name in machine.vector_alu_ops else 0
    return vec / total


# --- gradient-check instances -----------------------------------------------


def convstack_margins(m: models.ConvStackModel, ids: np.ndarray) -> tuple[float, float]:
    """(min |relu preactivation|, min max-pool winner gap) of a forward pass.

    A finite-difference probe of size eps only crosses a kink if some margin
    is comparable to eps, so instances screened for wide margins make the
    check exact.
    """
    x = m.embedding.forward(ids)
    relu_margin = np.inf
    for layer in m.convs:
        x = layer.forward(x)
        if isinstance(layer, L.Conv1D):
            relu_margin = min(relu_margin, float(np.abs(x).min()))
    if x.shape[1] > 1:
        ranked = np.sort(x, axis=1)
        gap = float((ranked[:, -1, :] - ranked[:, -2, :]).min())
    else:
        gap = np.inf
    h = m.pool.forward(x).reshape(x.shape[0], -1)
    for layer in m.fc:
        h = layer.forward(h)
        if isinstance(layer, L.Dense):
            relu_margin = min(relu_margin, float(np.abs(h).min()))
    return relu_margin, gap


def clean_convstack_instance(master_seed: int, eps: float):
    """A small ConvStack plus data, nudged and screened so no finite
    difference straddles a ReLU kink or flips a pool argmax."""
    rng = np.random.default_rng(master_seed)
    cfg = models.ModelConfig(
        "convstack",
        vocab_size=20,
        max_len=10,
        embed_dim=4,
        conv_layers=((4, 2),) * 6,
        fc_sizes=(8, 1),
    )
    for _ in range(500):
        m = models.build(cfg, seed=int(rng.integers(2**32)))
        for name, p in m.params_named():
            if name.endswith(".b"):
                p += rng.uniform(0.1, 0.3, size=p.shape)
        ids = rng.integers(0, cfg.vocab_size, size=(1, cfg.max_len))
        y = rng.standard_normal(1)
        margin, gap = convstack_margins(m, ids)
        if margin > 10 * eps and gap > 10 * eps:
            return m, ids, y
    raise AssertionError("could not find a kink-free instance")


def model_loss_and_grad(m: models.Model, ids: np.ndarray, y: np.ndarray):
    def loss_and_grad(params):
        m.set_params(params)
        m.zero_grads()
        pred = m.forward(ids)
        loss = mse_loss(pred, y)
        m.backward(mse_loss_backward(pred, y))
        return loss, [g.copy() for g in m.grads()]

    return loss_and_grad
