"""Command-line entry point wiring the whole pipeline.

Exit codes: 0 success, 1 usage error, 2 data/validation error, 3 internal
error.  ``predict`` and ``oracle`` write numbers only to stdout (one line
per input function) so compilers can consume them; every diagnostic goes to
stderr.  Any subcommand accepts ``--config <path>`` with line-oriented
``key = value`` pairs (keys are the long flag names without ``--``);
explicit flags win over the file.
"""

from __future__ import annotations

import argparse
import sys

from . import __version__, checkpoint, dataset, models, training
from .errors import ValidationError, XpuCostError
from .ir import parse_function
from .oracle import MachineConfig, register_pressure, vector_alu_utilization
from .tokenizer import DEFAULT_MAX_LEN, Mode, Vocabulary, build_vocab, pad_or_truncate, tokenize

_TARGETS = {
    "register-pressure": dataset.TargetKind.REGISTER_PRESSURE,
    "xpu-utilization": dataset.TargetKind.XPU_UTILIZATION,
}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 instead of argparse's default 2
        raise _UsageError(f"{self.prog}: {message}")


def _machine(args) -> MachineConfig:
    if getattr(args, "machine_config", None):
        with open(args.machine_config, "r", encoding="utf-8") as fh:
            return MachineConfig.from_text(fh.read())
    return MachineConfig()


def _mode(args) -> Mode:
    return Mode.parse(args.mode)


def _note(msg: str) -> None:
    print(msg, file=sys.stderr)


def _read_ir_paths(args) -> list[str]:
    paths = list(args.ir or [])
    if getattr(args, "ir_list", None):
        with open(args.ir_list, "r", encoding="utf-8") as fh:
            paths.extend(line.strip() for line in fh if line.strip())
    if not paths:
        raise _UsageError("give at least one --ir file (or --ir-list)")
    return paths


def _parse_ir_file(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_function(fh.read())


# --- subcommands -----------------------------------------------------------


def _cmd_gen_data(args) -> int:
    cfg = dataset.GeneratorConfig(
        num_samples=args.n, op_count_range=(args.min_ops, args.max_ops), seed=args.seed
    )
    samples = dataset.generate(cfg, _machine(args))
    dataset.write_csv(samples, args.out)
    _note(f"wrote {len(samples)} samples ({(len(samples) + 1) // 2} functions) to {args.out}")
    return 0


def _cmd_augment(args) -> int:
    samples = dataset.load_csv(args.data)
    out = dataset.augment(
        samples,
        dataset.AugmentPolicy.parse(args.policy),
        args.factor,
        _machine(args),
        args.seed,
    )
    dataset.write_csv(out, args.out)
    _note(f"augmented {len(samples)} -> {len(out)} samples in {args.out}")
    return 0


def _cmd_split(args) -> int:
    ratios = tuple(float(r) for r in args.ratios.split(","))
    if len(ratios) != 3:
        raise _UsageError("--ratios needs three comma-separated numbers")
    samples = dataset.load_csv(args.data)
    train_s, val_s, test_s = dataset.split(samples, ratios, args.seed)
    for part, path in ((train_s, args.train), (val_s, args.val), (test_s, args.test)):
        dataset.write_csv(part, path)
    _note(f"split {len(samples)} -> {len(train_s)}/{len(val_s)}/{len(test_s)}")
    return 0


def _corpus_functions(samples):
    seen = set()
    funcs = []
    for s in samples:
        if s.ir_text not in seen:
            seen.add(s.ir_text)
            funcs.append(parse_function(s.ir_text))
    return funcs


def _cmd_build_vocab(args) -> int:
    samples = dataset.load_csv(args.data)
    vocab = build_vocab(_corpus_functions(samples), _mode(args), args.min_freq)
    vocab.save(args.out)
    _note(f"vocabulary of {len(vocab)} tokens written to {args.out}")
    return 0


def _cmd_tokenize(args) -> int:
    vocab = Vocabulary.load(args.vocab)
    for path in _read_ir_paths(args):
        seq = tokenize(_parse_ir_file(path), vocab, _mode(args))
        if args.max_len:
            seq = pad_or_truncate(seq, args.max_len)
        print(" ".join(str(i) for i in seq.ids))
    return 0


def _train_config(args, mode: Mode) -> training.TrainConfig:
    return training.TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        optimizer=args.optimizer,
        lr=args.lr,
        seed=args.seed,
        early_stop_patience=args.patience,
        mode=mode,
        max_len=args.max_len,
        grad_clip=args.grad_clip or None,
    )


def _load_target_samples(path, kind) -> list[dataset.Sample]:
    samples = dataset.filter_kind(dataset.load_csv(path), kind)
    if not samples:
        raise ValidationError(f"{path} has no {kind.value} samples")
    return samples


def _cmd_train(args) -> int:
    kind = _TARGETS[args.target]
    mode = _mode(args)
    vocab = Vocabulary.load(args.vocab)
    samples = _load_target_samples(args.data, kind)
    if args.val_data:
        train_s, val_s = samples, _load_target_samples(args.val_data, kind)
    else:
        val_n = max(1, int(round(len(samples) * args.val_ratio)))
        train_s, val_s, rest = dataset.split(
            samples,
            (1.0 - 2 * args.val_ratio, args.val_ratio, args.val_ratio),
            args.seed,
        )
        train_s = train_s + rest  # only a validation slice is carved off
    cfg = _train_config(args, mode)
    mc = models.ModelConfig(
        architecture=args.arch, vocab_size=len(vocab), max_len=cfg.resolved_max_len
    )
    model = models.build(mc, args.seed)
    result = training.train(model, train_s, val_s, cfg, vocab)
    checkpoint.save_checkpoint(args.out, result.model, vocab, result.adam_state)
    if args.history:
        with open(args.history, "w", encoding="utf-8") as fh:
            fh.write("epoch train_rmse val_rmse\n")
            for h in result.history:
                fh.write(f"{h.epoch} {h.train_rmse!r} {h.val_rmse!r}\n")
    best = result.history[result.best_epoch]
    _note(
        f"trained {args.arch} on {len(train_s)} samples; "
        f"best epoch {best.epoch} val rmse {best.val_rmse:.6g}; saved {args.out}"
    )
    return 0


def _cmd_eval(args) -> int:
    vocab = Vocabulary.load(args.vocab) if args.vocab else None
    model, vocab, _ = checkpoint.load_checkpoint(args.model, vocab)
    if model.target_kind is None:
        raise ValidationError(f"{args.model} has no target kind; was it trained?")
    samples = _load_target_samples(args.data, model.target_kind)
    report = training.evaluate(model, samples, vocab)
    text = report.to_text()
    sys.stdout.write(text)
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write(text)
    return 0


def _cmd_compare(args) -> int:
    kind = _TARGETS[args.target]
    mode = _mode(args)
    vocab = Vocabulary.load(args.vocab)
    samples = _load_target_samples(args.data, kind)
    cfg = _train_config(args, mode)
    archs = [a.strip() for a in args.archs.split(",") if a.strip()]
    if len(archs) < 1:
        raise _UsageError("--archs needs at least one architecture")
    configs = [
        models.ModelConfig(architecture=a, vocab_size=len(vocab), max_len=cfg.resolved_max_len)
        for a in archs
    ]
    report = training.compare_architectures(samples, configs, cfg, vocab)
    text = report.to_text()
    sys.stdout.write(text)
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write(text)
    return 0


def _cmd_predict(args) -> int:
    vocab = Vocabulary.load(args.vocab) if args.vocab else None
    model, vocab, _ = checkpoint.load_checkpoint(args.model, vocab)
    if model.mode is None:
        raise ValidationError(f"{args.model} records no tokenization mode; was it trained?")
    for path in _read_ir_paths(args):
        seq = pad_or_truncate(
            tokenize(_parse_ir_file(path), vocab, model.mode), model.config.max_len
        )
        if args.rounded:
            print(models.predict_rounded(model, seq))
        else:
            print(repr(models.predict(model, seq)))
    return 0


def _cmd_oracle(args) -> int:
    machine = _machine(args)
    for path in _read_ir_paths(args):
        f = _parse_ir_file(path)
        print(f"{register_pressure(f, machine)} {vector_alu_utilization(f, machine)!r}")
    return 0


# --- parser ------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="key = value file of flag defaults")


def _add_ir_inputs(p: argparse.ArgumentParser) -> None:
    p.add_argument("--ir", action="append", metavar="PATH", help="IR file (repeatable)")
    p.add_argument("--ir-list", metavar="PATH", help="file with one IR path per line")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mode", default="ops-only", choices=[m.value for m in Mode])
    p.add_argument("--max-len", type=int, default=None,
                   help=f"sequence length (default {DEFAULT_MAX_LEN[Mode.OPS_ONLY]} ops-only, "
                        f"{DEFAULT_MAX_LEN[Mode.OPS_AND_OPERANDS]} ops-operands)")
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--optimizer", default="adam", choices=["adam", "sgd"])
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--patience", type=int, default=10, help="early stop patience (epochs)")
    p.add_argument("--grad-clip", type=float, default=5.0,
                   help="global gradient-norm clip; 0 disables")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="xpucost", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", help="generate a labeled synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=20000, help="number of samples (2 per function)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--min-ops", type=int, default=3)
    p.add_argument("--max-ops", type=int, default=40)
    p.add_argument("--machine-config", metavar="PATH")
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("augment", help="expand a corpus with label-safe variants")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--policy", default="rename-only",
                   choices=[a.value for a in dataset.AugmentPolicy])
    p.add_argument("--factor", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--machine-config", metavar="PATH")
    p.set_defaults(func=_cmd_augment)

    p = sub.add_parser("split", help="shuffle and partition a corpus")
    p.add_argument("--data", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--val", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--ratios", default="0.8,0.1,0.1")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("build-vocab", help="build a vocabulary from a corpus")
    p.add_argument("--data", required=True)
    p.add_argument("--mode", default="ops-only", choices=[m.value for m in Mode])
    p.add_argument("--min-freq", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_build_vocab)

    p = sub.add_parser("tokenize", help="print token ids for IR files")
    _add_ir_inputs(p)
    p.add_argument("--vocab", required=True)
    p.add_argument("--mode", default="ops-only", choices=[m.value for m in Mode])
    p.add_argument("--max-len", type=int, default=None)
    p.set_defaults(func=_cmd_tokenize)

    p = sub.add_parser("train", help="train one model")
    p.add_argument("--data", required=True)
    p.add_argument("--val-data", help="validation CSV (default: carve out --val-ratio)")
    p.add_argument("--val-ratio", type=float, default=0.1)
    p.add_argument("--vocab", required=True)
    p.add_argument("--arch", default="convstack", choices=list(models.ARCHITECTURES))
    p.add_argument("--target", required=True, choices=sorted(_TARGETS))
    p.add_argument("--out", required=True)
    p.add_argument("--history", metavar="PATH", help="write per-epoch RMSE history")
    _add_train_flags(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--vocab", help="must hash-match the checkpoint (default: embedded)")
    p.add_argument("--report", metavar="PATH", help="also write the report here")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("compare", help="train all architectures on identical splits")
    p.add_argument("--data", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--target", required=True, choices=sorted(_TARGETS))
    p.add_argument("--archs", default=",".join(models.ARCHITECTURES))
    p.add_argument("--report", metavar="PATH")
    _add_train_flags(p)
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("predict", help="predict the model's target for IR files")
    p.add_argument("--model", required=True)
    _add_ir_inputs(p)
    p.add_argument("--vocab", help="must hash-match the checkpoint (default: embedded)")
    p.add_argument("--rounded", action="store_true",
                   help="print the rounded integer prediction (register pressure)")
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("oracle", help="print analytical targets: pressure utilization")
    _add_ir_inputs(p)
    p.add_argument("--machine-config", metavar="PATH")
    p.set_defaults(func=_cmd_oracle)

    for sp in sub.choices.values():
        _add_common(sp)
    return parser


def _config_argv(argv: list[str]) -> list[str]:
    """Expand --config files into argv tokens so flags keep their types and
    explicit flags (appearing later) win."""
    path = None
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            path = argv[i + 1]
        elif tok.startswith("--config="):
            path = tok.split("=", 1)[1]
    if path is None or not argv:
        return argv
    injected: list[str] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise _UsageError(f"{path} line {lineno}: expected key = value")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key == "config":
                raise _UsageError(f"{path} line {lineno}: config files cannot nest")
            if value.lower() in ("true", "yes") and key in ("rounded",):
                injected.append(f"--{key}")
            else:
                injected.extend([f"--{key}", value])
    return [argv[0], *injected, *argv[1:]]


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        parser = build_parser()
        args = parser.parse_args(_config_argv(argv))
        return args.func(args) or 0
    except _UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except SystemExit as e:  # argparse --help / --version
        code = e.code if isinstance(e.code, int) else 0
        return code
    except BrokenPipeError:
        return 0
    except (XpuCostError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # pragma: no cover - genuine bugs
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
