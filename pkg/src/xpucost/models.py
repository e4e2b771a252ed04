"""The three sequence-regression architectures over token ids.

* ``convstack`` — embedding, six valid convolutions (kernel size 2 by
  default) with ReLU, one max-pool (global by default), then three fully
  connected layers.
* ``bagfc`` — embedding, mean over non-PAD positions, fully connected
  stack; order-blind by construction.
* ``recurrent`` — embedding, a single gated recurrent layer read left to
  right, the last non-PAD hidden state, fully connected stack.

A model predicts one scalar per sequence.  Targets may be z-score
normalized; predictions are denormalized on the way out, and utilization
predictions are clamped to [0, 1] at prediction time only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import TargetKind
from .errors import ConfigError, LengthMismatchError, ModeMismatchError
from .nn import layers as L
from .tokenizer import Mode, PAD_ID, TokenSequence

ARCHITECTURES = ("convstack", "bagfc", "recurrent")


@dataclass(frozen=True)
class ModelConfig:
    architecture: str
    vocab_size: int
    max_len: int
    embed_dim: int = 64
    conv_layers: tuple[tuple[int, int], ...] = field(
        default_factory=lambda: ((64, 2),) * 6
    )
    fc_sizes: tuple[int, ...] = (128, 64, 1)
    recurrent_hidden: int = 128
    pool_window: int | None = None  # None: global max pool
    pool_stride: int | None = None
    target_norm: tuple[float, float] | None = None  # z-score (mean, std)

    def __post_init__(self):
        object.__setattr__(
            self, "conv_layers", tuple((int(o), int(k)) for o, k in self.conv_layers)
        )
        object.__setattr__(self, "fc_sizes", tuple(int(s) for s in self.fc_sizes))
        if self.architecture not in ARCHITECTURES:
            raise ConfigError(
                f"unknown architecture {self.architecture!r}; choose from {ARCHITECTURES}"
            )
        if self.vocab_size < 4:
            raise ConfigError("vocab_size must cover at least the reserved ids")
        if self.embed_dim < 1:
            raise ConfigError("embed_dim must be positive")
        if self.max_len < 2:
            raise ConfigError("max_len must be >= 2")
        if not self.fc_sizes or self.fc_sizes[-1] != 1:
            raise ConfigError("fc_sizes must end in 1")
        if any(s < 1 for s in self.fc_sizes):
            raise ConfigError("fc_sizes must be positive")
        if self.architecture == "convstack":
            if not self.conv_layers:
                raise ConfigError("convstack needs at least one conv layer")
            if any(o < 1 or k < 1 for o, k in self.conv_layers):
                raise ConfigError("conv channels and kernel sizes must be positive")
            if self.conv_out_len < 1:
                raise ConfigError(
                    f"conv stack consumes the whole sequence: max_len {self.max_len} "
                    f"shrinks to {self.conv_out_len}"
                )
            if self.pool_window is not None:
                if self.pool_window < 1 or self.pool_window > self.conv_out_len:
                    raise ConfigError(
                        f"pool window {self.pool_window} does not fit length {self.conv_out_len}"
                    )
                if self.pool_stride is not None and self.pool_stride < 1:
                    raise ConfigError("pool stride must be positive")
        if self.architecture == "recurrent" and self.recurrent_hidden < 1:
            raise ConfigError("recurrent_hidden must be positive")
        if self.target_norm is not None:
            mean, std = self.target_norm
            if std <= 0:
                raise ConfigError(f"target_norm std must be positive, got {std}")
            object.__setattr__(self, "target_norm", (float(mean), float(std)))

    @property
    def conv_out_len(self) -> int:
        n = self.max_len
        for _, k in self.conv_layers:
            n -= k - 1
        return n

    @property
    def pooled_len(self) -> int:
        if self.pool_window is None:
            return 1
        stride = self.pool_stride or self.pool_window
        return (self.conv_out_len - self.pool_window) // stride + 1


class Model:
    """Common scaffolding: an ordered layer list and scalar-head plumbing."""

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        self.mode: Mode | None = None
        self.target_kind: TargetKind | None = None
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed))
        self._build(rng)

    def _build(self, rng: np.random.Generator) -> None:
        raise NotImplementedError

    def _fc_stack(self, in_f: int, rng: np.random.Generator) -> list[L.Layer]:
        stack: list[L.Layer] = []
        prev = in_f
        for i, size in enumerate(self.config.fc_sizes):
            stack.append(L.Dense(prev, size, rng, name=f"fc{i}"))
            if i < len(self.config.fc_sizes) - 1:
                stack.append(L.ReLU())
            prev = size
        return stack

    def _run_fc(self, x: np.ndarray) -> np.ndarray:
        for layer in self.fc:
            x = layer.forward(x)
        return x[:, 0]

    def _back_fc(self, dpred: np.ndarray) -> np.ndarray:
        dy = dpred[:, None]
        for layer in reversed(self.fc):
            dy = layer.backward(dy)
        return dy

    def forward(self, ids: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dpred: np.ndarray) -> None:
        raise NotImplementedError

    def _all_layers(self) -> list[L.Layer]:
        raise NotImplementedError

    def params_named(self) -> list[tuple[str, np.ndarray]]:
        return [p for layer in self._all_layers() for p in layer.params_named()]

    def grads_named(self) -> list[tuple[str, np.ndarray]]:
        return [g for layer in self._all_layers() for g in layer.grads_named()]

    def params(self) -> list[np.ndarray]:
        return [p for _, p in self.params_named()]

    def grads(self) -> list[np.ndarray]:
        return [g for _, g in self.grads_named()]

    def set_params(self, values: list[np.ndarray]) -> None:
        current = self.params_named()
        if len(values) != len(current):
            raise ConfigError(f"expected {len(current)} parameter arrays, got {len(values)}")
        for (_, p), v in zip(current, values):
            if p.shape != v.shape:
                raise ConfigError(f"parameter shape {v.shape} does not match {p.shape}")
            p[...] = v

    def zero_grads(self) -> None:
        for layer in self._all_layers():
            layer.zero_grads()

    def param_count(self) -> int:
        return sum(p.size for p in self.params())

    # -- target normalization --------------------------------------------

    def denormalize(self, raw: np.ndarray) -> np.ndarray:
        if self.config.target_norm is not None:
            mean, std = self.config.target_norm
            raw = raw * std + mean
        if self.target_kind is TargetKind.XPU_UTILIZATION:
            raw = np.clip(raw, 0.0, 1.0)
        return raw

    def normalize_targets(self, y: np.ndarray) -> np.ndarray:
        if self.config.target_norm is None:
            return y
        mean, std = self.config.target_norm
        return (y - mean) / std


class ConvStackModel(Model):
    architecture = "convstack"

    def _build(self, rng):
        cfg = self.config
        self.embedding = L.Embedding(cfg.vocab_size, cfg.embed_dim, rng)
        self.convs: list[L.Layer] = []
        prev = cfg.embed_dim
        for i, (out_ch, k) in enumerate(cfg.conv_layers):
            self.convs.append(L.Conv1D(prev, out_ch, k, rng, name=f"conv{i}"))
            self.convs.append(L.ReLU())
            prev = out_ch
        self.pool = L.MaxPool1D(cfg.pool_window, cfg.pool_stride)
        self.fc = self._fc_stack(cfg.pooled_len * prev, rng)
        self._pool_shape: tuple[int, ...] | None = None

    def forward(self, ids):
        x = self.embedding.forward(ids)
        for layer in self.convs:
            x = layer.forward(x)
        x = self.pool.forward(x)
        self._pool_shape = x.shape
        return self._run_fc(x.reshape(x.shape[0], -1))

    def backward(self, dpred):
        dy = self._back_fc(dpred).reshape(self._pool_shape)
        dy = self.pool.backward(dy)
        for layer in reversed(self.convs):
            dy = layer.backward(dy)
        self.embedding.backward(dy)

    def _all_layers(self):
        return [self.embedding, *self.convs, self.pool, *self.fc]


class BagFCModel(Model):
    architecture = "bagfc"

    def _build(self, rng):
        cfg = self.config
        self.embedding = L.Embedding(cfg.vocab_size, cfg.embed_dim, rng)
        self.fc = self._fc_stack(cfg.embed_dim, rng)
        self._mask: np.ndarray | None = None
        self._counts: np.ndarray | None = None

    def forward(self, ids):
        x = self.embedding.forward(ids)
        self._mask = (np.asarray(ids) != PAD_ID)[:, :, None]
        self._counts = self._mask.sum(axis=1).astype(np.float64)  # [B,1]
        mean = (x * self._mask).sum(axis=1) / self._counts
        return self._run_fc(mean)

    def backward(self, dpred):
        dmean = self._back_fc(dpred)
        demb = np.where(self._mask, (dmean / self._counts)[:, None, :], 0.0)
        self.embedding.backward(demb)

    def _all_layers(self):
        return [self.embedding, *self.fc]


class RecurrentModel(Model):
    architecture = "recurrent"

    def _build(self, rng):
        cfg = self.config
        self.embedding = L.Embedding(cfg.vocab_size, cfg.embed_dim, rng)
        self.gru = L.GRU(cfg.embed_dim, cfg.recurrent_hidden, rng)
        self.fc = self._fc_stack(cfg.recurrent_hidden, rng)

    def forward(self, ids):
        ids = np.asarray(ids)
        x = self.embedding.forward(ids)
        lengths = (ids != PAD_ID).sum(axis=1)
        h = self.gru.forward(x, lengths)
        return self._run_fc(h)

    def backward(self, dpred):
        dh = self._back_fc(dpred)
        dx = self.gru.backward(dh)
        self.embedding.backward(dx)

    def _all_layers(self):
        return [self.embedding, self.gru, *self.fc]


_MODEL_CLASSES = {
    "convstack": ConvStackModel,
    "bagfc": BagFCModel,
    "recurrent": RecurrentModel,
}


def build(config: ModelConfig, seed: int = 0) -> Model:
    """Construct a model with freshly initialized, seeded parameters."""
    return _MODEL_CLASSES[config.architecture](config, seed)


def with_target_norm(model: Model, mean: float, std: float) -> None:
    model.config = replace(model.config, target_norm=(mean, std))


def _check_sequence(model: Model, seq: TokenSequence) -> None:
    if model.mode is not None and seq.mode is not model.mode:
        raise ModeMismatchError(
            f"sequence mode {seq.mode.value} does not match model mode {model.mode.value}"
        )
    if len(seq.ids) != model.config.max_len:
        raise LengthMismatchError(
            f"sequence length {len(seq.ids)} != model max_len {model.config.max_len}"
        )


def predict(model: Model, seq: TokenSequence) -> float:
    """Denormalized scalar prediction for one fixed-length sequence."""
    _check_sequence(model, seq)
    ids = np.asarray(seq.ids, dtype=np.int64)[None, :]
    raw = model.forward(ids)
    return float(model.denormalize(raw)[0])


def predict_batch(model: Model, ids: np.ndarray) -> np.ndarray:
    return model.denormalize(model.forward(np.asarray(ids, dtype=np.int64)))


def round_half_away(x: float) -> int:
    return int(math.floor(x + 0.5)) if x >= 0 else -int(math.floor(-x + 0.5))


def predict_rounded(model: Model, seq: TokenSequence) -> int:
    """Integer register-pressure prediction: round half away from zero,
    floored at 0."""
    return max(0, round_half_away(predict(model, seq)))
