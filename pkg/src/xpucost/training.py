"""Supervised training loop, metrics, and the architecture comparison.

Loss is mean squared error on (optionally z-score normalized) targets;
reported metrics are always in label units.  Training is deterministic for
a fixed seed: fixed shuffles, fixed batch order, single-instance models.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dataset import Sample, TargetKind, split
from .errors import ConfigError, EmptyDatasetError, MixedTargetsError
from .ir import parse_function
from .models import (
    Model,
    ModelConfig,
    build,
    predict_batch,
    round_half_away,
    with_target_norm,
)
from .nn.ops import AdamState, adam_step, mse_loss_backward, sgd_step
from .tokenizer import DEFAULT_MAX_LEN, Mode, Vocabulary, pad_or_truncate, tokenize

EVAL_BATCH = 256


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 60
    batch_size: int = 32
    optimizer: str = "adam"  # "adam" | "sgd"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    early_stop_patience: int = 10
    mode: Mode = Mode.OPS_ONLY
    max_len: int | None = None  # default depends on mode
    grad_clip: float | None = 5.0  # global-norm clip; heavy-tail labels can
    # otherwise produce batch gradients that kill the ReLU stack early on

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be positive")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.early_stop_patience < 1:
            raise ConfigError("early_stop_patience must be positive")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise ConfigError("grad_clip must be positive (or None)")

    @property
    def resolved_max_len(self) -> int:
        return self.max_len if self.max_len is not None else DEFAULT_MAX_LEN[self.mode]


@dataclass
class EpochStats:
    epoch: int
    train_rmse: float
    val_rmse: float


@dataclass
class TrainResult:
    model: Model
    history: list[EpochStats]
    best_epoch: int
    adam_state: AdamState | None


def _single_kind(samples: Sequence[Sample]) -> TargetKind:
    if not samples:
        raise EmptyDatasetError("no samples")
    kinds = {s.target_kind for s in samples}
    if len(kinds) != 1:
        raise MixedTargetsError(f"mixed target kinds: {sorted(k.value for k in kinds)}")
    return samples[0].target_kind


def encode_samples(
    samples: Sequence[Sample], vocab: Vocabulary, mode: Mode, max_len: int
) -> tuple[np.ndarray, np.ndarray]:
    """Token-id matrix [n, max_len] and label vector for a sample list."""
    ids = np.empty((len(samples), max_len), dtype=np.int64)
    labels = np.empty(len(samples))
    for i, s in enumerate(samples):
        seq = pad_or_truncate(tokenize(parse_function(s.ir_text), vocab, mode), max_len)
        ids[i] = seq.ids
        labels[i] = s.target_value
    return ids, labels


def _epoch_rng(seed: int, epoch: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(epoch,)))


def train(
    model: Model,
    train_samples: Sequence[Sample],
    val_samples: Sequence[Sample],
    cfg: TrainConfig,
    vocab: Vocabulary,
) -> TrainResult:
    """Fit the model, early-stopping on validation RMSE, and return the
    best-validation parameters plus the per-epoch history."""
    kind = _single_kind(list(train_samples) + list(val_samples))
    if model.target_kind is not None and model.target_kind is not kind:
        raise MixedTargetsError(
            f"model was set up for {model.target_kind.value}, data is {kind.value}"
        )
    model.target_kind = kind
    model.mode = cfg.mode
    max_len = cfg.resolved_max_len
    if max_len != model.config.max_len:
        raise ConfigError(
            f"model max_len {model.config.max_len} != training max_len {max_len}"
        )

    x_train, y_train = encode_samples(train_samples, vocab, cfg.mode, max_len)
    x_val, y_val = encode_samples(val_samples, vocab, cfg.mode, max_len)

    if kind is TargetKind.REGISTER_PRESSURE and model.config.target_norm is None:
        std = float(y_train.std())
        with_target_norm(model, float(y_train.mean()), std if std > 1e-12 else 1.0)
    y_norm = model.normalize_targets(y_train)
    denorm_scale = model.config.target_norm[1] if model.config.target_norm else 1.0

    adam = AdamState.zeros_like(model.params()) if cfg.optimizer == "adam" else None
    n = len(train_samples)
    best_val = np.inf
    best_epoch = -1
    best_params: list[np.ndarray] | None = None
    since_best = 0
    history: list[EpochStats] = []

    for epoch in range(cfg.epochs):
        order = _epoch_rng(cfg.seed, epoch).permutation(n)
        sq_sum = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            xb, yb = x_train[idx], y_norm[idx]
            model.zero_grads()
            pred = model.forward(xb)
            diff = pred - yb
            sq_sum += float(diff @ diff)
            model.backward(mse_loss_backward(pred, yb))
            params, grads = model.params(), model.grads()
            if cfg.grad_clip is not None:
                norm = float(np.sqrt(sum(float(g.ravel() @ g.ravel()) for g in grads)))
                if norm > cfg.grad_clip:
                    grads = [g * (cfg.grad_clip / norm) for g in grads]
            if adam is not None:
                new_params, adam = adam_step(
                    params, adam, grads, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps
                )
            else:
                new_params = sgd_step(params, grads, cfg.lr)
            model.set_params(new_params)
        train_rmse = float(np.sqrt(sq_sum / n)) * denorm_scale
        val_rmse = _rmse(predict_batch_chunked(model, x_val), y_val)
        history.append(EpochStats(epoch, train_rmse, val_rmse))
        if val_rmse < best_val:
            best_val = val_rmse
            best_epoch = epoch
            best_params = [p.copy() for p in model.params()]
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.early_stop_patience:
                break

    if best_params is not None:
        model.set_params(best_params)
    return TrainResult(model, history, best_epoch, adam)


def predict_batch_chunked(model: Model, ids: np.ndarray) -> np.ndarray:
    out = np.empty(len(ids))
    for start in range(0, len(ids), EVAL_BATCH):
        out[start : start + EVAL_BATCH] = predict_batch(model, ids[start : start + EVAL_BATCH])
    return out


def _rmse(pred: np.ndarray, truth: np.ndarray) -> float:
    diff = pred - truth
    return float(np.sqrt(np.mean(diff * diff)))


@dataclass
class EvalReport:
    n: int
    rmse: float
    rmse_pct_of_range: float
    exact_match_pct: float | None = None
    error_histogram: dict[int, int] | None = None

    def to_text(self) -> str:
        lines = [
            f"n = {self.n}",
            f"rmse = {self.rmse!r}",
            f"rmse_pct_of_range = {self.rmse_pct_of_range!r}",
        ]
        if self.exact_match_pct is not None:
            lines.append(f"exact_match_pct = {self.exact_match_pct!r}")
        if self.error_histogram is not None:
            for err in sorted(self.error_histogram):
                lines.append(f"error_hist.{err} = {self.error_histogram[err]}")
        return "\n".join(lines) + "\n"


def evaluate(model: Model, samples: Sequence[Sample], vocab: Vocabulary) -> EvalReport:
    """Metrics on denormalized predictions; pure (repeated calls agree)."""
    kind = _single_kind(samples)
    if model.target_kind is not None and model.target_kind is not kind:
        raise MixedTargetsError(
            f"model predicts {model.target_kind.value}, data is {kind.value}"
        )
    if model.mode is None:
        raise ConfigError("model has no tokenization mode; train it first")
    ids, labels = encode_samples(samples, vocab, model.mode, model.config.max_len)
    preds = predict_batch_chunked(model, ids)
    rmse = _rmse(preds, labels)
    label_range = float(labels.max() - labels.min())
    if label_range > 0:
        pct = 100.0 * rmse / label_range
    else:
        pct = 0.0 if rmse == 0 else float("inf")

    exact = None
    hist = None
    if kind is TargetKind.REGISTER_PRESSURE:
        rounded = np.array([max(0, round_half_away(p)) for p in preds])
        truth = np.rint(labels).astype(np.int64)
        errors = np.abs(rounded - truth)
        exact = 100.0 * float(np.mean(errors == 0))
        hist = {}
        for e in errors:
            hist[int(e)] = hist.get(int(e), 0) + 1
    return EvalReport(len(samples), rmse, pct, exact, hist)


def mean_baseline_rmse(train_samples: Sequence[Sample], eval_samples: Sequence[Sample]) -> float:
    """RMSE of always predicting the training-set mean label."""
    mean = float(np.mean([s.target_value for s in train_samples]))
    truth = np.array([s.target_value for s in eval_samples])
    return _rmse(np.full(len(truth), mean), truth)


@dataclass
class CompareRow:
    architecture: str
    test_rmse: float
    rmse_pct_of_range: float
    val_rmse: float
    param_count: int


@dataclass
class ComparisonReport:
    rows: list[CompareRow] = field(default_factory=list)

    def to_text(self) -> str:
        headers = ["architecture", "test_rmse", "rmse_pct_of_range", "val_rmse", "params"]
        table = [headers] + [
            [
                r.architecture,
                f"{r.test_rmse:.6g}",
                f"{r.rmse_pct_of_range:.4g}",
                f"{r.val_rmse:.6g}",
                str(r.param_count),
            ]
            for r in self.rows
        ]
        widths = [max(len(row[i]) for row in table) for i in range(len(headers))]
        lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in table]
        return "\n".join(lines) + "\n"


def compare_architectures(
    samples: Sequence[Sample],
    configs: Sequence[ModelConfig],
    cfg: TrainConfig,
    vocab: Vocabulary,
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
) -> ComparisonReport:
    """Train each config on identical splits and seeds; rows are ordered by
    test RMSE, best first."""
    if len(configs) < 1:
        raise ConfigError("need at least one model config")
    _single_kind(samples)
    train_s, val_s, test_s = split(list(samples), ratios, cfg.seed)
    rows = []
    for mc in configs:
        model = build(mc, cfg.seed)
        result = train(model, train_s, val_s, cfg, vocab)
        report = evaluate(result.model, test_s, vocab)
        best = result.history[result.best_epoch]
        rows.append(
            CompareRow(
                mc.architecture,
                report.rmse,
                report.rmse_pct_of_range,
                best.val_rmse,
                model.param_count(),
            )
        )
    rows.sort(key=lambda r: r.test_rmse)
    return ComparisonReport(rows)
