"""Turn dataflow functions into token-id sequences for the regression models.

Two encodings are supported:

* ``ops-only`` — opcodes and tensor shapes, no dataflow: BOS, one shape
  token per argument, then ``opcode, result-shape`` per op, one shape token
  per returned value, EOS.
* ``ops-operands`` — the same frame, but each op contributes a
  result-position token (``%<body-index>``), its opcode, one normalized
  token per operand, and its result shape.  Operands are encoded by
  def-distance — ``@-<k>`` for the result of the op ``k`` positions earlier,
  ``@arg<j>`` for arguments — which keeps the vocabulary bounded and makes
  the encoding invariant under SSA renaming.

Tensor shapes are tokenized as single entities (``tensor<1x128xf32>`` is one
token), never split into digits; unseen shapes fall back to the OOV id.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator

from .errors import EmptyCorpusError, ValidationError
from .ir import GraphFunction

PAD_ID = 0
OOV_ID = 1
BOS_ID = 2
EOS_ID = 3
RESERVED_TOKENS = ("<pad>", "<oov>", "<bos>", "<eos>")


class Mode(Enum):
    OPS_ONLY = "ops-only"
    OPS_AND_OPERANDS = "ops-operands"

    @classmethod
    def parse(cls, text: str) -> "Mode":
        for m in cls:
            if m.value == text:
                return m
        raise ValidationError(f"unknown tokenization mode {text!r}")


DEFAULT_MAX_LEN = {Mode.OPS_ONLY: 64, Mode.OPS_AND_OPERANDS: 256}


@dataclass(frozen=True)
class TokenSequence:
    ids: tuple[int, ...]
    mode: Mode
    source_len: int  # length before any padding/truncation

    def __len__(self) -> int:
        return len(self.ids)


class Vocabulary:
    """Token-string <-> id mapping with reserved PAD/OOV/BOS/EOS ids."""

    def __init__(self, tokens: Iterable[str]):
        self.id_to_token: list[str] = list(RESERVED_TOKENS)
        self.token_to_id: dict[str, int] = {t: i for i, t in enumerate(self.id_to_token)}
        for tok in tokens:
            if tok in self.token_to_id:
                raise ValidationError(f"duplicate vocabulary token {tok!r}")
            self.token_to_id[tok] = len(self.id_to_token)
            self.id_to_token.append(tok)

    def __len__(self) -> int:
        return len(self.id_to_token)

    def lookup(self, token: str) -> int:
        return self.token_to_id.get(token, OOV_ID)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def to_text(self) -> str:
        return "".join(f"{i}\t{t}\n" for i, t in enumerate(self.id_to_token))

    @classmethod
    def from_text(cls, text: str) -> "Vocabulary":
        entries: list[tuple[int, str]] = []
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValidationError(f"vocab line {lineno}: expected <id><TAB><token>")
            try:
                entries.append((int(parts[0]), parts[1]))
            except ValueError:
                raise ValidationError(f"vocab line {lineno}: bad id {parts[0]!r}") from None
        for i, (got, _) in enumerate(entries):
            if got != i:
                raise ValidationError(f"vocab ids must be contiguous from 0; got {got} at position {i}")
        if [t for _, t in entries[:4]] != list(RESERVED_TOKENS):
            raise ValidationError(f"vocab must start with reserved tokens {RESERVED_TOKENS}")
        return cls(t for _, t in entries[4:])

    def sha256(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_text())

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_text(fh.read())


# --- token streams -------------------------------------------------------


def _frame_prefix(f: GraphFunction) -> Iterator[str]:
    for _, shape in f.args:
        yield shape.render()


def _frame_suffix(f: GraphFunction) -> Iterator[str]:
    for shape in f.return_shapes():
        yield shape.render()


def ops_only_tokens(f: GraphFunction) -> Iterator[str]:
    yield from _frame_prefix(f)
    for op in f.body:
        yield op.opcode
        yield op.result_shape.render()
    yield from _frame_suffix(f)


def ops_operands_tokens(f: GraphFunction) -> Iterator[str]:
    arg_index = {name: j for j, (name, _) in enumerate(f.args)}
    result_index: dict[str, int] = {}
    yield from _frame_prefix(f)
    for i, op in enumerate(f.body):
        yield f"%{i}"
        yield op.opcode
        for oid in op.operand_ids:
            if oid in arg_index:
                yield f"@arg{arg_index[oid]}"
            else:
                yield f"@-{i - result_index[oid]}"
        yield op.result_shape.render()
        result_index[op.result_id] = i
    yield from _frame_suffix(f)


def content_tokens(f: GraphFunction, mode: Mode) -> Iterator[str]:
    if mode is Mode.OPS_ONLY:
        return ops_only_tokens(f)
    return ops_operands_tokens(f)


# --- operations ------------------------------------------------------------


def build_vocab(corpus: list[GraphFunction], mode: Mode, min_freq: int = 1) -> Vocabulary:
    """Vocabulary of all tokens with corpus frequency >= min_freq.

    Deterministic given corpus order: tokens are added in order of first
    occurrence.
    """
    if not corpus:
        raise EmptyCorpusError("cannot build a vocabulary from an empty corpus")
    if min_freq < 1:
        raise ValidationError("min_freq must be >= 1")
    counts: dict[str, int] = {}
    for f in corpus:
        for tok in content_tokens(f, mode):
            counts[tok] = counts.get(tok, 0) + 1
    # dicts preserve insertion order, so this is first-occurrence order
    return Vocabulary(t for t, c in counts.items() if c >= min_freq)


def _assemble(tokens: Iterator[str], vocab: Vocabulary, mode: Mode) -> TokenSequence:
    ids = [BOS_ID, *(vocab.lookup(t) for t in tokens), EOS_ID]
    return TokenSequence(tuple(ids), mode, len(ids))


def tokenize_ops_only(f: GraphFunction, vocab: Vocabulary) -> TokenSequence:
    return _assemble(ops_only_tokens(f), vocab, Mode.OPS_ONLY)


def tokenize_ops_operands(f: GraphFunction, vocab: Vocabulary) -> TokenSequence:
    return _assemble(ops_operands_tokens(f), vocab, Mode.OPS_AND_OPERANDS)


def tokenize(f: GraphFunction, vocab: Vocabulary, mode: Mode) -> TokenSequence:
    if mode is Mode.OPS_ONLY:
        return tokenize_ops_only(f, vocab)
    return tokenize_ops_operands(f, vocab)


def pad_or_truncate(s: TokenSequence, max_len: int) -> TokenSequence:
    """Fix the sequence length: right-pad with PAD, or truncate keeping BOS
    and forcing the final token to EOS."""
    if max_len < 2:
        raise ValidationError("max_len must be >= 2")
    if len(s.ids) == max_len:
        return s
    if len(s.ids) < max_len:
        ids = s.ids + (PAD_ID,) * (max_len - len(s.ids))
    else:
        ids = s.ids[: max_len - 1] + (EOS_ID,)
    return TokenSequence(ids, s.mode, s.source_len)
