"""A minimal textual tensor IR for straight-line dataflow functions.

The dialect (``xpu``) models the kind of high-level graph a deep-learning
framework hands to a compiler: a single function whose body is a straight
line of SSA operations over statically shaped tensors.  Example::

    func @step(%arg0: tensor<16xf32>, %arg1: tensor<16xf32>) -> (tensor<16xf32>) {
      %0 = xpu.mult %arg0, %arg1 : (tensor<16xf32>, tensor<16xf32>) -> tensor<16xf32>
      %1 = xpu.add %0, %arg1 : (tensor<16xf32>, tensor<16xf32>) -> tensor<16xf32>
      return %1
    }

Grammar notes:

* one op per line; ``//`` starts a comment; blank lines are ignored
* arguments are named ``%arg0 .. %argN-1`` in order, op results are
  ``%<nonneg-integer>`` (any integers on input; emission renumbers densely)
* the type signature after ``:`` is either the full
  ``(<type>, ...) -> <type>`` form or a single bare type shared by all
  operands and the result (elementwise shorthand)
* the closing ``}`` may sit on the ``return`` line or on its own line

No regions, no control flow, no attributes: just tensors and use-def chains.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterator

from .errors import (
    ArityMismatchError,
    InvalidFunctionError,
    IrSyntaxError,
    ShapeRuleError,
    SsaError,
    UnknownOpcodeError,
)

DIALECT = "xpu"

#: element-type name -> storage bytes per element
DTYPE_BYTES = {"f32": 4, "f16": 2, "bf16": 2, "i32": 4, "i8": 1}


@dataclass(frozen=True)
class TensorShape:
    """A statically shaped tensor type, e.g. ``tensor<1x128x128xf32>``."""

    dims: tuple[int, ...]
    dtype: str

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if not self.dims:
            raise ValueError("tensor must have at least one dimension")
        if any(d < 1 for d in self.dims):
            raise ValueError(f"tensor dims must be >= 1, got {self.dims}")
        if self.dtype not in DTYPE_BYTES:
            raise ValueError(
                f"unknown element type {self.dtype!r}; choose from {sorted(DTYPE_BYTES)}"
            )

    @property
    def num_elements(self) -> int:
        n = 1
        for d in self.dims:
            n *= d
        return n

    @property
    def size_bytes(self) -> int:
        return self.num_elements * DTYPE_BYTES[self.dtype]

    @property
    def rank(self) -> int:
        return len(self.dims)

    def render(self) -> str:
        return "tensor<" + "x".join([*map(str, self.dims), self.dtype]) + ">"

    @classmethod
    def parse(cls, text: str) -> "TensorShape":
        m = re.fullmatch(r"tensor<([^<>]+)>", text.strip())
        if not m:
            raise ValueError(f"not a tensor type: {text!r}")
        parts = m.group(1).split("x")
        if len(parts) < 2:
            raise ValueError(f"tensor type needs dims and an element type: {text!r}")
        dtype = parts[-1]
        try:
            dims = tuple(int(p) for p in parts[:-1])
        except ValueError:
            raise ValueError(f"bad dimension in tensor type: {text!r}") from None
        return cls(dims, dtype)

    def __str__(self) -> str:
        return self.render()


# --- opcode registry ----------------------------------------------------

ShapeRule = Callable[[tuple[TensorShape, ...], "TensorShape | None"], TensorShape]


def _same_shape_binary(operands, declared):
    a, b = operands
    if a != b:
        raise ShapeRuleError(f"elementwise operands must match: {a} vs {b}")
    return a


def _same_shape_unary(operands, declared):
    return operands[0]


def _matmul(operands, declared):
    a, b = operands
    if a.rank != 2 or b.rank != 2:
        raise ShapeRuleError(f"matmul needs rank-2 operands, got {a} and {b}")
    if a.dtype != b.dtype:
        raise ShapeRuleError(f"matmul operands must share dtype: {a} vs {b}")
    if a.dims[1] != b.dims[0]:
        raise ShapeRuleError(f"matmul inner dims differ: {a} x {b}")
    return TensorShape((a.dims[0], b.dims[1]), a.dtype)


def _reduce_sum(operands, declared):
    return TensorShape((1,), operands[0].dtype)


def _transpose(operands, declared):
    s = operands[0]
    return TensorShape(tuple(reversed(s.dims)), s.dtype)


def _reshape(operands, declared):
    # Element count and dtype are preserved; the target shape is whatever the
    # op declares.  Without a declaration, canonicalize to a flat vector.
    src = operands[0]
    if declared is None:
        return TensorShape((src.num_elements,), src.dtype)
    if declared.dtype != src.dtype:
        raise ShapeRuleError(f"reshape cannot change dtype: {src} -> {declared}")
    if declared.num_elements != src.num_elements:
        raise ShapeRuleError(
            f"reshape must preserve element count: {src} -> {declared}"
        )
    return declared


@dataclass(frozen=True)
class OpInfo:
    name: str
    arity: int
    rule: ShapeRule


_OPS = [
    OpInfo("mult", 2, _same_shape_binary),
    OpInfo("add", 2, _same_shape_binary),
    OpInfo("sub", 2, _same_shape_binary),
    OpInfo("matmul", 2, _matmul),
    OpInfo("relu", 1, _same_shape_unary),
    OpInfo("sigmoid", 1, _same_shape_unary),
    OpInfo("tanh", 1, _same_shape_unary),
    OpInfo("reduce_sum", 1, _reduce_sum),
    OpInfo("transpose", 1, _transpose),
    OpInfo("reshape", 1, _reshape),
    OpInfo("copy", 1, _same_shape_unary),
    OpInfo("load", 1, _same_shape_unary),
    OpInfo("store", 1, _same_shape_unary),
]

OP_REGISTRY: dict[str, OpInfo] = {op.name: op for op in _OPS}
OP_NAMES: tuple[str, ...] = tuple(op.name for op in _OPS)


def qualified(name: str) -> str:
    return f"{DIALECT}.{name}"


def bare_opcode(opcode: str) -> str:
    """Strip the dialect prefix: ``xpu.mult`` -> ``mult``."""
    prefix = DIALECT + "."
    return opcode[len(prefix):] if opcode.startswith(prefix) else opcode


def op_info(opcode: str) -> OpInfo:
    info = OP_REGISTRY.get(bare_opcode(opcode))
    if info is None:
        raise UnknownOpcodeError(f"unknown opcode {opcode!r}")
    return info


def infer_result_shape(
    opcode: str,
    operand_shapes: tuple[TensorShape, ...],
    declared: TensorShape | None = None,
) -> TensorShape:
    """Apply an opcode's shape rule; total over the registered op set.

    Raises UnknownOpcodeError / ArityMismatchError / ShapeRuleError, never
    returns an unhandled case.
    """
    info = op_info(opcode)
    if len(operand_shapes) != info.arity:
        raise ArityMismatchError(
            f"{qualified(info.name)} takes {info.arity} operand(s), got {len(operand_shapes)}"
        )
    result = info.rule(tuple(operand_shapes), declared)
    if declared is not None and result != declared:
        raise ShapeRuleError(
            f"{qualified(info.name)} of {', '.join(map(str, operand_shapes))} "
            f"yields {result}, not the declared {declared}"
        )
    return result


# --- IR structures ------------------------------------------------------


@dataclass(frozen=True)
class OperationNode:
    """One SSA operation: ``%r = xpu.op %a, %b : (ta, tb) -> tr``."""

    result_id: str
    opcode: str  # qualified, e.g. "xpu.mult"
    operand_ids: tuple[str, ...]
    operand_shapes: tuple[TensorShape, ...]
    result_shape: TensorShape

    def __post_init__(self):
        object.__setattr__(self, "operand_ids", tuple(self.operand_ids))
        object.__setattr__(self, "operand_shapes", tuple(self.operand_shapes))


@dataclass(frozen=True)
class GraphFunction:
    """A straight-line SSA dataflow function over tensors."""

    name: str
    args: tuple[tuple[str, TensorShape], ...]
    body: tuple[OperationNode, ...]
    returns: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "args", tuple((n, s) for n, s in self.args))
        object.__setattr__(self, "body", tuple(self.body))
        object.__setattr__(self, "returns", tuple(self.returns))

    def arg_shapes(self) -> tuple[TensorShape, ...]:
        return tuple(s for _, s in self.args)

    def value_shape(self, value_id: str) -> TensorShape:
        for n, s in self.args:
            if n == value_id:
                return s
        for op in self.body:
            if op.result_id == value_id:
                return op.result_shape
        raise KeyError(value_id)

    def return_shapes(self) -> tuple[TensorShape, ...]:
        return tuple(self.value_shape(r) for r in self.returns)


class ViolationKind(Enum):
    SSA = "ssa"
    OPCODE = "opcode"
    ARITY = "arity"
    SHAPE = "shape"
    STRUCTURE = "structure"


@dataclass(frozen=True)
class Violation:
    kind: ViolationKind
    op_index: int | None  # body index, None for function-level problems
    message: str


# --- validation ---------------------------------------------------------

_ARG_RE = re.compile(r"%arg(\d+)\Z")
_RESULT_RE = re.compile(r"%(\d+)\Z")


def validate(f: GraphFunction) -> list[Violation]:
    """Collect every invariant violation; an empty list means valid."""
    out: list[Violation] = []
    if not f.body:
        out.append(Violation(ViolationKind.STRUCTURE, None, "function body is empty"))

    defined: dict[str, TensorShape] = {}
    for name, shape in f.args:
        if not _ARG_RE.match(name):
            out.append(
                Violation(ViolationKind.SSA, None, f"bad argument name {name!r}")
            )
        if name in defined:
            out.append(
                Violation(ViolationKind.SSA, None, f"duplicate definition of {name}")
            )
        defined[name] = shape

    for i, op in enumerate(f.body):
        info = OP_REGISTRY.get(bare_opcode(op.opcode))
        if not _RESULT_RE.match(op.result_id):
            out.append(
                Violation(ViolationKind.SSA, i, f"bad result name {op.result_id!r}")
            )
        if op.result_id in defined:
            out.append(
                Violation(
                    ViolationKind.SSA, i, f"duplicate definition of {op.result_id}"
                )
            )
        if info is None:
            out.append(
                Violation(ViolationKind.OPCODE, i, f"unknown opcode {op.opcode!r}")
            )
            defined[op.result_id] = op.result_shape
            continue
        if len(op.operand_ids) != info.arity:
            out.append(
                Violation(
                    ViolationKind.ARITY,
                    i,
                    f"{op.opcode} takes {info.arity} operand(s), got {len(op.operand_ids)}",
                )
            )
            defined[op.result_id] = op.result_shape
            continue
        shapes_ok = True
        for oid, oshape in zip(op.operand_ids, op.operand_shapes):
            if oid not in defined:
                out.append(
                    Violation(ViolationKind.SSA, i, f"use of undefined value {oid}")
                )
                shapes_ok = False
            elif defined[oid] != oshape:
                out.append(
                    Violation(
                        ViolationKind.SHAPE,
                        i,
                        f"operand {oid} declared {oshape} but defined as {defined[oid]}",
                    )
                )
                shapes_ok = False
        if shapes_ok:
            try:
                infer_result_shape(op.opcode, op.operand_shapes, op.result_shape)
            except ShapeRuleError as e:
                out.append(Violation(ViolationKind.SHAPE, i, str(e)))
        defined[op.result_id] = op.result_shape

    if not f.returns:
        out.append(Violation(ViolationKind.STRUCTURE, None, "function returns nothing"))
    for r in f.returns:
        if r not in defined:
            out.append(Violation(ViolationKind.SSA, None, f"return of undefined value {r}"))
    return out


# --- lexer --------------------------------------------------------------

_TOKEN_SPEC = [
    ("TYPE", r"tensor<[^<>]*>"),
    ("OPCODE", rf"{DIALECT}\.[A-Za-z_][A-Za-z_0-9]*"),
    ("FUNC", r"\bfunc\b"),
    ("RETURN", r"\breturn\b"),
    ("SYMBOL", r"@[A-Za-z_][A-Za-z_0-9]*"),
    ("VALUE", r"%[A-Za-z_0-9]+"),
    ("ARROW", r"->"),
    ("LPAREN", r"\("),
    ("RPAREN", r"\)"),
    ("LBRACE", r"\{"),
    ("RBRACE", r"\}"),
    ("COLON", r":"),
    ("COMMA", r","),
    ("EQUALS", r"="),
    ("WS", r"[ \t\r]+"),
    ("BAD", r"."),
]
_LEXER_RE = re.compile("|".join(f"(?P<{n}>{p})" for n, p in _TOKEN_SPEC))


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    line: int
    col: int


def _lex(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("//", 1)[0]
        for m in _LEXER_RE.finditer(line):
            kind = m.lastgroup
            if kind == "WS":
                continue
            if kind == "BAD":
                raise IrSyntaxError(
                    f"unexpected character {m.group()!r}", lineno, m.start() + 1
                )
            tokens.append(_Token(kind, m.group(), lineno, m.start() + 1))
    return tokens


class _Parser:
    def __init__(self, tokens: list[_Token], n_lines: int):
        self.tokens = tokens
        self.pos = 0
        self.n_lines = n_lines

    def peek(self) -> _Token | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def error(self, expected: str) -> IrSyntaxError:
        tok = self.peek()
        if tok is None:
            return IrSyntaxError("unexpected end of input", self.n_lines, 1, expected)
        return IrSyntaxError(f"unexpected {tok.text!r}", tok.line, tok.col, expected)

    def take(self, kind: str, expected: str | None = None) -> _Token:
        tok = self.peek()
        if tok is None or tok.kind != kind:
            raise self.error(expected or kind.lower())
        self.pos += 1
        return tok

    def at(self, kind: str) -> bool:
        tok = self.peek()
        return tok is not None and tok.kind == kind

    def tensor_type(self) -> TensorShape:
        tok = self.take("TYPE", "a tensor type like tensor<16xf32>")
        try:
            return TensorShape.parse(tok.text)
        except ValueError as e:
            raise IrSyntaxError(str(e), tok.line, tok.col) from None

    def type_list_parens(self) -> list[TensorShape]:
        self.take("LPAREN", "'('")
        types: list[TensorShape] = []
        if not self.at("RPAREN"):
            types.append(self.tensor_type())
            while self.at("COMMA"):
                self.take("COMMA")
                types.append(self.tensor_type())
        self.take("RPAREN", "')'")
        return types


def parse_function(text: str) -> GraphFunction:
    """Parse a single function; raises on syntax, SSA, or shape errors."""
    n_lines = max(1, text.count("\n") + 1)
    p = _Parser(_lex(text), n_lines)

    p.take("FUNC", "'func'")
    name_tok = p.take("SYMBOL", "a function name like @main")
    name = name_tok.text[1:]

    p.take("LPAREN", "'('")
    args: list[tuple[str, TensorShape]] = []
    if not p.at("RPAREN"):
        while True:
            v = p.take("VALUE", "an argument like %arg0")
            expected = f"%arg{len(args)}"
            if v.text != expected:
                raise IrSyntaxError(
                    f"arguments must be named in order; got {v.text!r}",
                    v.line,
                    v.col,
                    expected,
                )
            p.take("COLON", "':'")
            args.append((v.text, p.tensor_type()))
            if not p.at("COMMA"):
                break
            p.take("COMMA")
    p.take("RPAREN", "')'")
    p.take("ARROW", "'->'")
    declared_returns = p.type_list_parens()
    p.take("LBRACE", "'{'")

    defined: dict[str, TensorShape] = dict(args)
    body: list[OperationNode] = []
    while p.at("VALUE"):
        res = p.take("VALUE")
        if not _RESULT_RE.match(res.text):
            raise SsaError(
                f"line {res.line}: op results must be %<integer>, got {res.text!r}"
            )
        if res.text in defined:
            raise SsaError(f"line {res.line}: redefinition of {res.text}")
        p.take("EQUALS", "'='")
        op_tok = p.take("OPCODE", f"an opcode like {DIALECT}.mult")
        info = OP_REGISTRY.get(bare_opcode(op_tok.text))
        if info is None:
            raise UnknownOpcodeError(f"line {op_tok.line}: unknown opcode {op_tok.text!r}")
        operands = [p.take("VALUE", "an operand").text]
        while p.at("COMMA"):
            p.take("COMMA")
            operands.append(p.take("VALUE", "an operand").text)
        p.take("COLON", "':'")
        if p.at("LPAREN"):
            operand_types = p.type_list_parens()
            p.take("ARROW", "'->'")
            result_type = p.tensor_type()
        else:
            # elementwise shorthand: one type for operands and result alike
            shared = p.tensor_type()
            operand_types = [shared] * len(operands)
            result_type = shared
        if len(operands) != info.arity:
            raise ArityMismatchError(
                f"line {op_tok.line}: {op_tok.text} takes {info.arity} operand(s), "
                f"got {len(operands)}"
            )
        if len(operand_types) != len(operands):
            raise IrSyntaxError(
                f"{len(operands)} operand(s) but {len(operand_types)} operand type(s)",
                op_tok.line,
                op_tok.col,
            )
        for oid, otype in zip(operands, operand_types):
            if oid not in defined:
                raise SsaError(f"line {op_tok.line}: use of undefined value {oid}")
            if defined[oid] != otype:
                raise ShapeRuleError(
                    f"line {op_tok.line}: operand {oid} declared {otype} "
                    f"but defined as {defined[oid]}"
                )
        try:
            infer_result_shape(op_tok.text, tuple(operand_types), result_type)
        except ShapeRuleError as e:
            raise ShapeRuleError(f"line {op_tok.line}: {e}") from None
        node = OperationNode(
            res.text, op_tok.text, tuple(operands), tuple(operand_types), result_type
        )
        defined[res.text] = result_type
        body.append(node)

    ret_tok = p.take("RETURN", "'return' or an op line")
    returns = [p.take("VALUE", "a value to return").text]
    while p.at("COMMA"):
        p.take("COMMA")
        returns.append(p.take("VALUE").text)
    for r in returns:
        if r not in defined:
            raise SsaError(f"line {ret_tok.line}: return of undefined value {r}")
    p.take("RBRACE", "'}'")
    if p.peek() is not None:
        raise p.error("end of input")
    if not body:
        raise IrSyntaxError("function body is empty", ret_tok.line, ret_tok.col)

    if len(declared_returns) != len(returns):
        raise ShapeRuleError(
            f"signature declares {len(declared_returns)} result(s) "
            f"but {len(returns)} value(s) are returned"
        )
    for r, declared in zip(returns, declared_returns):
        if defined[r] != declared:
            raise ShapeRuleError(
                f"returned value {r} has type {defined[r]}, signature says {declared}"
            )

    return GraphFunction(name, tuple(args), tuple(body), tuple(returns))


# --- emission -----------------------------------------------------------


def emit_text(f: GraphFunction, canonical: bool = True) -> str:
    """Render a function to canonical IR text.

    With ``canonical`` (the default) op results are renumbered densely in
    body order, making emission a fixed point: emit(parse(emit(f))) == emit(f).
    """
    problems = validate(f)
    if problems:
        raise InvalidFunctionError(
            "; ".join(v.message for v in problems[:3])
            + ("" if len(problems) <= 3 else f" (+{len(problems) - 3} more)")
        )
    if canonical:
        rename = {op.result_id: f"%{i}" for i, op in enumerate(f.body)}
    else:
        rename = {}

    def nm(v: str) -> str:
        return rename.get(v, v)

    lines = []
    args = ", ".join(f"{n}: {s}" for n, s in f.args)
    rets = ", ".join(str(s) for s in f.return_shapes())
    lines.append(f"func @{f.name}({args}) -> ({rets}) {{")
    for op in f.body:
        operands = ", ".join(nm(o) for o in op.operand_ids)
        sig = "(" + ", ".join(str(s) for s in op.operand_shapes) + ")"
        lines.append(
            f"  {nm(op.result_id)} = {op.opcode} {operands} : {sig} -> {op.result_shape}"
        )
    lines.append("  return " + ", ".join(nm(r) for r in f.returns))
    lines.append("}")
    return "\n".join(lines) + "\n"


def iter_value_defs(f: GraphFunction) -> Iterator[tuple[str, TensorShape]]:
    """All value definitions in definition order: args first, then results."""
    yield from f.args
    for op in f.body:
        yield op.result_id, op.result_shape
