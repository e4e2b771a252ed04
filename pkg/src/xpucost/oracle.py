"""Analytical cost oracles: register pressure and vector-ALU utilization.

These deterministic cost functions provide the training labels.  They model
an accelerator with wide vector registers executing a straight-line tensor
program:

* every value occupies ``ceil(bytes / register_width_bytes)`` registers
  while live (whole tensors are register-resident at this abstraction level)
* a value is live from its definition (function entry for arguments) through
  its last use, or through the return if it is returned; a value that is
  never read and never returned occupies nothing
* register pressure is the maximum, over program points (entry, each op,
  return), of the summed footprints of live values
* utilization is the fraction of instruction slots issued to the vector ALU

No spilling and no scheduling: pressure is demand, not allocation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

from .errors import ConfigError, InvalidFunctionError
from .ir import DTYPE_BYTES, GraphFunction, OP_NAMES, TensorShape, bare_opcode, validate

DEFAULT_REGISTER_WIDTH_BYTES = 64  # one 512-bit vector register

DEFAULT_VECTOR_ALU_OPS = frozenset(
    {"mult", "add", "sub", "relu", "sigmoid", "tanh", "reduce_sum"}
)


def _default_slot_cost() -> dict[str, int]:
    cost = {name: 1 for name in OP_NAMES}
    cost["matmul"] = 4
    return cost


@dataclass(frozen=True)
class MachineConfig:
    """Cost parameters of the modeled accelerator."""

    register_width_bytes: int = DEFAULT_REGISTER_WIDTH_BYTES
    vector_alu_ops: frozenset[str] = DEFAULT_VECTOR_ALU_OPS
    slot_cost: Mapping[str, int] = field(default_factory=_default_slot_cost)

    def __post_init__(self):
        object.__setattr__(self, "vector_alu_ops", frozenset(self.vector_alu_ops))
        object.__setattr__(self, "slot_cost", dict(self.slot_cost))
        if self.register_width_bytes < 1:
            raise ConfigError("register_width_bytes must be positive")
        unknown = self.vector_alu_ops - set(OP_NAMES)
        if unknown:
            raise ConfigError(f"vector_alu_ops not in the op set: {sorted(unknown)}")
        for name in OP_NAMES:
            if name not in self.slot_cost:
                raise ConfigError(f"slot_cost missing entry for {name!r}")
        for name, c in self.slot_cost.items():
            if name not in OP_NAMES:
                raise ConfigError(f"slot_cost for unregistered opcode {name!r}")
            if int(c) < 1:
                raise ConfigError(f"slot_cost[{name!r}] must be positive")

    def footprint(self, shape: TensorShape) -> int:
        """Registers consumed by one live value of this shape."""
        return math.ceil(shape.num_elements * DTYPE_BYTES[shape.dtype] / self.register_width_bytes)

    # -- line-oriented `key = value` serialization -----------------------

    def to_text(self) -> str:
        lines = [
            f"register_width_bytes = {self.register_width_bytes}",
            "vector_alu_ops = " + ",".join(sorted(self.vector_alu_ops)),
        ]
        for name in sorted(self.slot_cost):
            lines.append(f"slot_cost.{name} = {self.slot_cost[name]}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "MachineConfig":
        """Parse config text; unspecified keys keep their defaults."""
        width = DEFAULT_REGISTER_WIDTH_BYTES
        vector = DEFAULT_VECTOR_ALU_OPS
        slots = _default_slot_cost()
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"machine config line {lineno}: expected key = value")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            try:
                if key == "register_width_bytes":
                    width = int(value)
                elif key == "vector_alu_ops":
                    vector = frozenset(v.strip() for v in value.split(",") if v.strip())
                elif key.startswith("slot_cost."):
                    slots[key[len("slot_cost."):]] = int(value)
                else:
                    raise ConfigError(f"machine config line {lineno}: unknown key {key!r}")
            except ValueError:
                raise ConfigError(
                    f"machine config line {lineno}: bad value {value!r} for {key!r}"
                ) from None
        return cls(width, vector, slots)


@dataclass(frozen=True)
class CostReport:
    register_pressure: int
    xpu_utilization: float


def _require_valid(f: GraphFunction) -> None:
    problems = validate(f)
    if problems:
        raise InvalidFunctionError(problems[0].message)


def register_pressure(f: GraphFunction, machine: MachineConfig | None = None) -> int:
    """Peak footprint of simultaneously live values over the function body.

    Program points are numbered 0 (entry), 1..n (each body op), n+1 (return).
    """
    machine = machine or MachineConfig()
    _require_valid(f)
    n = len(f.body)
    ret_point = n + 1

    def_point: dict[str, int] = {name: 0 for name, _ in f.args}
    last_use: dict[str, int] = {}
    footprints: dict[str, int] = {name: machine.footprint(s) for name, s in f.args}

    for i, op in enumerate(f.body):
        point = i + 1
        for oid in op.operand_ids:
            last_use[oid] = point
        def_point[op.result_id] = point
        footprints[op.result_id] = machine.footprint(op.result_shape)
    for r in f.returns:
        last_use[r] = ret_point

    peak = 0
    for point in range(ret_point + 1):
        total = 0
        for v, d in def_point.items():
            if d <= point <= last_use.get(v, -1):
                total += footprints[v]
        peak = max(peak, total)
    return peak


def slot_counts(f: GraphFunction, machine: MachineConfig | None = None) -> tuple[int, int]:
    """(vector-ALU slots, total slots) issued by the function body."""
    machine = machine or MachineConfig()
    _require_valid(f)
    vec = 0
    total = 0
    for op in f.body:
        c = machine.slot_cost[bare_opcode(op.opcode)]
        total += c
        if bare_opcode(op.opcode) in machine.vector_alu_ops:
            vec += c
    return vec, total


def vector_alu_utilization(f: GraphFunction, machine: MachineConfig | None = None) -> float:
    """Fraction of instruction slots spent on the vector ALU, in [0, 1]."""
    vec, total = slot_counts(f, machine)
    return vec / total


def cost_report(f: GraphFunction, machine: MachineConfig | None = None) -> CostReport:
    machine = machine or MachineConfig()
    return CostReport(register_pressure(f, machine), vector_alu_utilization(f, machine))
