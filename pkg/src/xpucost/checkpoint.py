"""Single-file model checkpoints.

Layout: magic ``XPCK``, u32 format version, a length-prefixed JSON header
(model config, tokenization mode, target kind, vocabulary hash and text),
u32 tensor count, then each tensor as (name, shape, row-major float64,
little-endian).  Readers reject version mismatches, and vocabulary hash
mismatches when a vocabulary is supplied.

The header embeds the full vocabulary text next to its sha256, so a
checkpoint alone is enough to run predictions; an externally supplied
vocabulary must hash-match the embedded reference.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .dataset import TargetKind
from .errors import CheckpointError
from .models import Model, ModelConfig, build
from .nn.ops import AdamState
from .tokenizer import Mode, Vocabulary

MAGIC = b"XPCK"
VERSION = 1


def _config_to_dict(cfg: ModelConfig) -> dict:
    return {
        "architecture": cfg.architecture,
        "vocab_size": cfg.vocab_size,
        "max_len": cfg.max_len,
        "embed_dim": cfg.embed_dim,
        "conv_layers": [list(x) for x in cfg.conv_layers],
        "fc_sizes": list(cfg.fc_sizes),
        "recurrent_hidden": cfg.recurrent_hidden,
        "pool_window": cfg.pool_window,
        "pool_stride": cfg.pool_stride,
        "target_norm": list(cfg.target_norm) if cfg.target_norm else None,
    }


def _config_from_dict(d: dict) -> ModelConfig:
    return ModelConfig(
        architecture=d["architecture"],
        vocab_size=d["vocab_size"],
        max_len=d["max_len"],
        embed_dim=d["embed_dim"],
        conv_layers=tuple(tuple(x) for x in d["conv_layers"]),
        fc_sizes=tuple(d["fc_sizes"]),
        recurrent_hidden=d["recurrent_hidden"],
        pool_window=d["pool_window"],
        pool_stride=d["pool_stride"],
        target_norm=tuple(d["target_norm"]) if d["target_norm"] else None,
    )


def _write_tensor(fh, name: str, arr: np.ndarray) -> None:
    encoded = name.encode("utf-8")
    fh.write(struct.pack("<H", len(encoded)))
    fh.write(encoded)
    fh.write(struct.pack("<B", arr.ndim))
    for d in arr.shape:
        fh.write(struct.pack("<I", d))
    fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _read_exact(fh, n: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise CheckpointError("truncated checkpoint file")
    return data


def _read_tensor(fh) -> tuple[str, np.ndarray]:
    (name_len,) = struct.unpack("<H", _read_exact(fh, 2))
    name = _read_exact(fh, name_len).decode("utf-8")
    (ndim,) = struct.unpack("<B", _read_exact(fh, 1))
    shape = tuple(struct.unpack("<I", _read_exact(fh, 4))[0] for _ in range(ndim))
    count = 1
    for d in shape:
        count *= d
    arr = np.frombuffer(_read_exact(fh, 8 * count), dtype="<f8").reshape(shape)
    return name, arr.astype(np.float64)


def save_checkpoint(
    path,
    model: Model,
    vocab: Vocabulary,
    adam_state: AdamState | None = None,
    extra: dict | None = None,
) -> None:
    vocab_text = vocab.to_text()
    header = {
        "model": _config_to_dict(model.config),
        "mode": model.mode.value if model.mode else None,
        "target_kind": model.target_kind.value if model.target_kind else None,
        "vocab_sha256": vocab.sha256(),
        "vocab_text": vocab_text,
        "extra": extra or {},
    }
    tensors: list[tuple[str, np.ndarray]] = list(model.params_named())
    if adam_state is not None:
        header["adam_t"] = adam_state.t
        names = [n for n, _ in model.params_named()]
        tensors += [(f"adam.m.{n}", m) for n, m in zip(names, adam_state.m)]
        tensors += [(f"adam.v.{n}", v) for n, v in zip(names, adam_state.v)]
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors:
            _write_tensor(fh, name, arr)


def load_checkpoint(
    path, vocab: Vocabulary | None = None
) -> tuple[Model, Vocabulary, AdamState | None]:
    """Rebuild (model, vocabulary, optimizer state) from a checkpoint.

    If ``vocab`` is given it must hash-match the checkpoint's reference;
    otherwise the embedded vocabulary is used.
    """
    with open(path, "rb") as fh:
        if _read_exact(fh, 4) != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file")
        (version,) = struct.unpack("<I", _read_exact(fh, 4))
        if version != VERSION:
            raise CheckpointError(
                f"{path}: format version {version}, this build reads {VERSION}"
            )
        (blob_len,) = struct.unpack("<I", _read_exact(fh, 4))
        header = json.loads(_read_exact(fh, blob_len).decode("utf-8"))
        (n_tensors,) = struct.unpack("<I", _read_exact(fh, 4))
        tensors = dict(_read_tensor(fh) for _ in range(n_tensors))

    embedded = Vocabulary.from_text(header["vocab_text"])
    if embedded.sha256() != header["vocab_sha256"]:
        raise CheckpointError(f"{path}: embedded vocabulary does not match its hash")
    if vocab is not None:
        if vocab.sha256() != header["vocab_sha256"]:
            raise CheckpointError(
                f"{path}: supplied vocabulary hash {vocab.sha256()[:12]}... does not "
                f"match the checkpoint's {header['vocab_sha256'][:12]}..."
            )
    else:
        vocab = embedded

    model = build(_config_from_dict(header["model"]))
    if header["mode"]:
        model.mode = Mode.parse(header["mode"])
    if header["target_kind"]:
        model.target_kind = TargetKind.parse(header["target_kind"])

    names = [n for n, _ in model.params_named()]
    missing = [n for n in names if n not in tensors]
    if missing:
        raise CheckpointError(f"{path}: missing parameter tensors {missing[:3]}")
    model.set_params([tensors[n] for n in names])

    adam_state = None
    if "adam_t" in header:
        try:
            m = [tensors[f"adam.m.{n}"] for n in names]
            v = [tensors[f"adam.v.{n}"] for n in names]
        except KeyError as e:
            raise CheckpointError(f"{path}: incomplete optimizer state ({e})") from None
        adam_state = AdamState(m, v, int(header["adam_t"]))
    return model, vocab, adam_state
