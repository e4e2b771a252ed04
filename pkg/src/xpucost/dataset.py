"""Synthetic corpus generation, CSV round-tripping, augmentation, splitting.

Each generated function yields two samples, one per target variable, so a
CSV row is (IR text, shape summary, target kind, target value).  Generation
draws a fresh RNG stream per function from (seed, index), so output is
reproducible and independent of evaluation order.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, CsvFormatError, IrError, ValidationError
from .ir import (
    GraphFunction,
    OP_NAMES,
    OperationNode,
    TensorShape,
    emit_text,
    infer_result_shape,
    parse_function,
    qualified,
    validate,
)
from .oracle import MachineConfig, register_pressure, vector_alu_utilization

CSV_HEADER = ["ir_text", "shape_summary", "target_kind", "target_value"]


class TargetKind(Enum):
    REGISTER_PRESSURE = "register_pressure"
    XPU_UTILIZATION = "xpu_utilization"

    @classmethod
    def parse(cls, text: str) -> "TargetKind":
        for k in cls:
            if k.value == text:
                return k
        raise CsvFormatError(f"unknown target kind {text!r}")


@dataclass(frozen=True)
class Sample:
    ir_text: str
    shape_summary: str
    target_kind: TargetKind
    target_value: float


def shape_summary(f: GraphFunction) -> str:
    ins = ",".join(s.render() for _, s in f.args)
    outs = ",".join(s.render() for s in f.return_shapes())
    return f"{ins}->{outs}"


# --- generator -----------------------------------------------------------

_ELEMENTWISE_BINARY = ("mult", "add", "sub")

DEFAULT_SHAPE_POOL: tuple[TensorShape, ...] = tuple(
    TensorShape(dims, dtype)
    for dims, dtype in [
        ((8,), "f32"),
        ((16,), "f32"),
        ((64,), "f32"),
        ((128,), "f32"),
        ((256,), "f32"),
        ((32,), "f16"),
        ((128,), "f16"),
        ((256,), "f16"),
        ((64,), "i8"),
        ((256,), "i8"),
        ((8, 8), "f32"),
        ((16, 16), "f32"),
        ((32, 32), "f32"),
        ((8, 64), "f32"),
        ((1, 128), "f32"),
        ((16, 16), "f16"),
        ((32, 64), "f16"),
        ((64, 64), "f16"),
        ((64, 64), "i8"),
        ((128, 128), "i8"),
        ((1, 8, 8), "f32"),
        ((1, 1, 256), "f32"),
        ((8, 8, 8), "f16"),
        ((8, 16, 16), "i8"),
    ]
)

# fresh matmul arguments are sized from the pool's dim universe, capped so a
# single value cannot dwarf the rest of the label distribution
_FRESH_ARG_MAX_BYTES = 16 * 1024


def _uniform_weights() -> dict[str, float]:
    return {name: 1.0 for name in OP_NAMES}


@dataclass(frozen=True)
class GeneratorConfig:
    num_samples: int
    op_count_range: tuple[int, int] = (3, 40)
    shape_pool: tuple[TensorShape, ...] = DEFAULT_SHAPE_POOL
    opcode_weights: Mapping[str, float] = field(default_factory=_uniform_weights)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "shape_pool", tuple(self.shape_pool))
        object.__setattr__(self, "opcode_weights", dict(self.opcode_weights))
        if self.num_samples < 1:
            raise ConfigError("num_samples must be positive")
        lo, hi = self.op_count_range
        if lo < 1 or hi < lo:
            raise ConfigError(f"bad op_count_range {self.op_count_range}")
        if not self.shape_pool:
            raise ConfigError("shape_pool must not be empty")
        for name in self.opcode_weights:
            if name not in OP_NAMES:
                raise ConfigError(f"opcode_weights for unknown opcode {name!r}")
        if any(w <= 0 for w in self.opcode_weights.values()):
            raise ConfigError("opcode weights must be positive")
        if not self.opcode_weights:
            raise ConfigError("opcode_weights must not be empty")


class _FunctionBuilder:
    """Grows one random straight-line function, inserting fresh arguments
    whenever no in-scope value satisfies an opcode's shape rule."""

    def __init__(self, rng: np.random.Generator, cfg: GeneratorConfig, name: str):
        self.rng = rng
        self.cfg = cfg
        self.name = name
        self.args: list[tuple[str, TensorShape]] = []
        self.body: list[OperationNode] = []
        self.scope: list[tuple[str, TensorShape]] = []  # args + results, def order
        dims: set[int] = set()
        dtypes: list[str] = []
        for s in cfg.shape_pool:
            dims.update(s.dims)
            if s.dtype not in dtypes:
                dtypes.append(s.dtype)
        self.dim_universe = sorted(dims)
        self.dtype_universe = dtypes

    def _pick(self, items: Sequence):
        return items[int(self.rng.integers(len(items)))]

    def add_arg(self, shape: TensorShape) -> tuple[str, TensorShape]:
        entry = (f"%arg{len(self.args)}", shape)
        self.args.append(entry)
        self.scope.append(entry)
        return entry

    def _fresh_matmul_shape(self, rows: int | None, dtype: str | None) -> TensorShape:
        from .ir import DTYPE_BYTES

        dtype = dtype or self._pick(self.dtype_universe)
        cands = []
        for a in [rows] if rows is not None else self.dim_universe:
            for b in self.dim_universe:
                if a * b * DTYPE_BYTES[dtype] <= _FRESH_ARG_MAX_BYTES:
                    cands.append((a, b))
        if not cands:  # rows alone too big: a single column always fits the cap spirit
            cands = [(rows, 1)]
        a, b = self._pick(cands)
        return TensorShape((a, b), dtype)

    def _operands_for(self, bare: str) -> list[tuple[str, TensorShape]]:
        if bare in _ELEMENTWISE_BINARY:
            base = self._pick(self.scope)
            matching = [v for v in self.scope if v[1] == base[1]]
            return [self._pick(matching), self._pick(matching)]
        if bare == "matmul":
            two_d = [v for v in self.scope if v[1].rank == 2]
            if two_d:
                left = self._pick(two_d)
            else:
                left = self.add_arg(self._fresh_matmul_shape(None, None))
            rows_needed = left[1].dims[1]
            rights = [
                v
                for v in self.scope
                if v[1].rank == 2 and v[1].dims[0] == rows_needed and v[1].dtype == left[1].dtype
            ]
            if rights:
                right = self._pick(rights)
            else:
                right = self.add_arg(self._fresh_matmul_shape(rows_needed, left[1].dtype))
            return [left, right]
        return [self._pick(self.scope)]

    def build(self) -> GraphFunction:
        lo, hi = self.cfg.op_count_range
        n_ops = int(self.rng.integers(lo, hi + 1))
        for _ in range(int(self.rng.integers(2, 5))):
            self.add_arg(self._pick(self.cfg.shape_pool))

        names = sorted(self.cfg.opcode_weights)
        weights = np.array([self.cfg.opcode_weights[n] for n in names], dtype=np.float64)
        probs = weights / weights.sum()

        for i in range(n_ops):
            bare = names[int(self.rng.choice(len(names), p=probs))]
            operands = self._operands_for(bare)
            shapes = tuple(s for _, s in operands)
            result_shape = infer_result_shape(bare, shapes)
            node = OperationNode(
                f"%{i}", qualified(bare), tuple(n for n, _ in operands), shapes, result_shape
            )
            self.body.append(node)
            self.scope.append((node.result_id, result_shape))

        # Return about half of the sink results (always the last one), so some
        # values stay live to the end while others become dead code; liveness
        # then actually depends on the wiring, not just on which shapes occur.
        used = {oid for op in self.body for oid in op.operand_ids}
        sinks = [op.result_id for op in self.body if op.result_id not in used]
        returns = tuple(
            r for r in sinks if r == self.body[-1].result_id or self.rng.random() < 0.5
        )
        return GraphFunction(self.name, tuple(self.args), tuple(self.body), returns)


def _function_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))


def generate_functions(config: GeneratorConfig, count: int) -> list[GraphFunction]:
    return [
        _FunctionBuilder(_function_rng(config.seed, i), config, f"fn{i}").build()
        for i in range(count)
    ]


def generate(config: GeneratorConfig, machine: MachineConfig | None = None) -> list[Sample]:
    """Sample random functions and label each with both oracle targets."""
    machine = machine or MachineConfig()
    n_functions = math.ceil(config.num_samples / 2)
    samples: list[Sample] = []
    for f in generate_functions(config, n_functions):
        text = emit_text(f)
        summary = shape_summary(f)
        samples.append(
            Sample(text, summary, TargetKind.REGISTER_PRESSURE, float(register_pressure(f, machine)))
        )
        samples.append(
            Sample(text, summary, TargetKind.XPU_UTILIZATION, vector_alu_utilization(f, machine))
        )
    return samples[: config.num_samples]


# --- CSV -------------------------------------------------------------------


def _format_target(value: float) -> str:
    if value == int(value):
        return str(int(value))
    return repr(value)


def write_csv(samples: Iterable[Sample], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for s in samples:
            writer.writerow(
                [s.ir_text, s.shape_summary, s.target_kind.value, _format_target(s.target_value)]
            )


def _check_sample(s: Sample, row: int) -> None:
    try:
        f = parse_function(s.ir_text)
    except IrError as e:
        raise ValidationError(f"row {row}: ir_text does not parse: {e}") from e
    if s.shape_summary != shape_summary(f):
        raise ValidationError(
            f"row {row}: shape_summary {s.shape_summary!r} does not match the IR"
        )
    if s.target_value < 0:
        raise ValidationError(f"row {row}: negative target value {s.target_value}")
    if s.target_kind is TargetKind.XPU_UTILIZATION and s.target_value > 1:
        raise ValidationError(f"row {row}: utilization {s.target_value} above 1")


def load_csv(path, check: bool = True) -> list[Sample]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError("empty file") from None
        if header != CSV_HEADER:
            raise CsvFormatError(f"bad header {header!r}, expected {CSV_HEADER!r}")
        samples: list[Sample] = []
        for row_num, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise CsvFormatError(f"expected 4 fields, got {len(row)}", row=row_num)
            kind = TargetKind.parse(row[2])
            try:
                value = float(row[3])
            except ValueError:
                raise CsvFormatError(
                    f"bad target value {row[3]!r}", row=row_num, column="target_value"
                ) from None
            s = Sample(row[0], row[1], kind, value)
            if check:
                _check_sample(s, row_num)
            samples.append(s)
    return samples


# --- augmentation -----------------------------------------------------------


class AugmentPolicy(Enum):
    RENAME_ONLY = "rename-only"
    REORDER_RECOMPUTE = "reorder-recompute"

    @classmethod
    def parse(cls, text: str) -> "AugmentPolicy":
        for p in cls:
            if p.value == text:
                return p
        raise ConfigError(f"unknown augmentation policy {text!r}")


def _rename_results(f: GraphFunction, rng: np.random.Generator) -> GraphFunction:
    n = len(f.body)
    fresh = rng.permutation(2 * n)[:n]
    mapping = {op.result_id: f"%{int(fresh[i])}" for i, op in enumerate(f.body)}
    body = tuple(
        OperationNode(
            mapping[op.result_id],
            op.opcode,
            tuple(mapping.get(o, o) for o in op.operand_ids),
            op.operand_shapes,
            op.result_shape,
        )
        for op in f.body
    )
    returns = tuple(mapping.get(r, r) for r in f.returns)
    return GraphFunction(f.name, f.args, body, returns)


def _reorder_ops(f: GraphFunction, rng: np.random.Generator) -> GraphFunction:
    n = len(f.body)
    producer = {op.result_id: i for i, op in enumerate(f.body)}
    deps: list[set[int]] = [
        {producer[o] for o in op.operand_ids if o in producer} for op in f.body
    ]
    placed: list[int] = []
    done: set[int] = set()
    ready = [i for i in range(n) if not deps[i]]
    while ready:
        pick = int(rng.integers(len(ready)))
        i = ready.pop(pick)
        placed.append(i)
        done.add(i)
        for j in range(n):
            if j not in done and j not in ready and deps[j] <= done:
                ready.append(j)
    body = tuple(f.body[i] for i in placed)
    return GraphFunction(f.name, f.args, body, f.returns)


def _recompute(f: GraphFunction, kind: TargetKind, machine: MachineConfig) -> float:
    if kind is TargetKind.REGISTER_PRESSURE:
        return float(register_pressure(f, machine))
    return vector_alu_utilization(f, machine)


def augment(
    samples: Sequence[Sample],
    policy: AugmentPolicy,
    factor: int,
    machine: MachineConfig | None = None,
    seed: int = 0,
) -> list[Sample]:
    """Expand a corpus with label-safe variants of each sample.

    RENAME_ONLY applies non-canonical SSA renames and copies the target
    (both oracles are rename-invariant).  REORDER_RECOMPUTE emits random
    dependency-respecting reorderings and recomputes the target, since
    register pressure is schedule-sensitive.  Duplicates are dropped, so the
    result has at most factor * len(samples) entries.
    """
    if factor < 1:
        raise ConfigError("factor must be >= 1")
    if factor == 1:
        return list(samples)
    machine = machine or MachineConfig()
    out: list[Sample] = []
    for idx, s in enumerate(samples):
        out.append(s)
        rng = _function_rng(seed, idx)
        f = parse_function(s.ir_text)
        seen = {s.ir_text}
        for _ in range(factor - 1):
            if policy is AugmentPolicy.RENAME_ONLY:
                g = _rename_results(f, rng)
                text = emit_text(g, canonical=False)
                value = s.target_value
            else:
                g = _reorder_ops(f, rng)
                text = emit_text(g)
                value = _recompute(g, s.target_kind, machine)
            if text in seen:
                continue
            seen.add(text)
            out.append(Sample(text, shape_summary(g), s.target_kind, value))
    return out


# --- splitting ---------------------------------------------------------------


def split(
    samples: Sequence[Sample], ratios: tuple[float, float, float], seed: int = 0
) -> tuple[list[Sample], list[Sample], list[Sample]]:
    """Deterministic shuffled partition into train/val/test."""
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ConfigError("ratios must be three positive numbers")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"ratios must sum to 1, got {sum(ratios)}")
    n = len(samples)
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(ratios[0] * n))
    n_val = int(round(ratios[1] * n))
    n_train = min(n_train, n)
    n_val = min(n_val, n - n_train)
    shuffled = [samples[i] for i in perm]
    return (
        shuffled[:n_train],
        shuffled[n_train : n_train + n_val],
        shuffled[n_train + n_val :],
    )


def filter_kind(samples: Iterable[Sample], kind: TargetKind) -> list[Sample]:
    return [s for s in samples if s.target_kind is kind]
