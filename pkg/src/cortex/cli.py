"""Command-line entry point: ``cortex <subcommand> ...``.

Exit codes: 0 success, 1 validation/config error, 2 I/O or format error,
3 non-finite loss, 4 gradient check failure. Summaries go to stdout as
``key: value`` lines; failures print a single ``error: ...`` line to stderr.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    ArtifactError,
    CheckpointError,
    DatasetFormatError,
    IngestionError,
    NonFiniteError,
    ShapeError,
    ValidationError,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_NONFINITE = 3
EXIT_GRADIENT = 4

log = logging.getLogger("cortex")


class CommandError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CommandError(message, EXIT_VALIDATION)


def _emit(key, value):
    print(f"{key}: {value}")


def _fmt(v):
    return f"{v:.6f}"


def _label_map(text):
    if not text:
        return None
    out = {}
    for item in text.split(","):
        name, _, idx = item.partition("=")
        if not name.strip() or not idx.strip():
            raise CommandError(f"bad --label-map entry {item!r}; expected name=id", EXIT_VALIDATION)
        out[name.strip()] = int(idx)
    return out


# --------------------------------------------------------------------------


def cmd_prepare(args):
    from .data import build_dataset

    summary = build_dataset(args.input_dir, args.output, _label_map(args.label_map), size=args.size)
    _emit("output", args.output)
    for name, count in summary.counts.items():
        _emit(f"count[{name}]", count)
    _emit("total", summary.total)
    _emit("skipped", len(summary.skipped))
    for path, reason in summary.skipped:
        _emit("skip", f"{path} ({reason})")
    for name in summary.empty_classes:
        _emit("warning", f"class {name} has no images")
    _emit("dataset_checksum", summary.checksum)
    return EXIT_OK


def cmd_synthesize(args):
    from .data import make_synthetic, write_image_tree

    ds = make_synthetic(args.per_class, args.size, args.noise, args.seed)
    if args.dataset:
        ds.save(args.dataset)
        _emit("dataset", args.dataset)
        _emit("dataset_checksum", ds.checksum)
    if args.image_dir:
        write_image_tree(ds, args.image_dir)
        _emit("image_dir", args.image_dir)
    if not args.dataset and not args.image_dir:
        raise CommandError("give --dataset and/or --image-dir", EXIT_VALIDATION)
    _emit("total", len(ds))
    return EXIT_OK


def _load_config(args):
    from .train import TrainConfig, load_config

    cfg = load_config(args.config) if args.config else TrainConfig()
    cfg = cfg.replace(
        seed=args.seed,
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.learning_rate,
        optimizer=args.optimizer,
        loss=args.loss,
        determinism=args.determinism,
        clip_norm=args.clip_norm,
    )
    return cfg.validate()


def _split(ds, fraction, seed, stratify):
    from .data import split_dataset

    return split_dataset(ds, fraction, seed, stratify=stratify)


def cmd_train(args):
    from .data import load_dataset, membership_hash
    from .metrics import CurveLog, emit_artifacts
    from .train import build_mri_model, evaluate_model, save_checkpoint, train

    cfg = _load_config(args)
    if not 0.0 < args.split <= 1.0:
        raise CommandError(f"--split must lie in (0, 1], got {args.split}", EXIT_VALIDATION)
    ds = load_dataset(args.dataset)
    checksum = ds.checksum
    train_set, test_set = _split(ds, args.split, cfg.seed, args.stratify)
    _emit("dataset_checksum", checksum)
    _emit("train_size", len(train_set))
    _emit("test_size", len(test_set))
    _emit("split_membership", membership_hash(test_set))

    model = build_mri_model(args.head, ds.image_shape, seed=cfg.seed)
    curves = CurveLog()
    train(model, train_set, cfg, curves, eval_set=test_set if args.track_eval else None)

    train_report = evaluate_model(model, train_set, cfg.batch_size)
    eval_report = evaluate_model(model, test_set, cfg.batch_size) if len(test_set) else None
    meta = {
        "class_names": ds.class_names,
        "config_hash": cfg.digest(),
        "dataset_checksum": checksum,
        "epoch": cfg.epochs,
        "head_mode": args.head,
        "seed": cfg.seed,
        "split": args.split,
        "stratify": bool(args.stratify),
    }
    save_checkpoint(model, args.out, meta)
    if args.metrics_dir:
        emit_artifacts(curves, eval_report, args.metrics_dir, ds.class_names, extra_files={"config.txt": cfg.to_text()})
    _emit("final_train_accuracy", _fmt(train_report.accuracy))
    if curves.records:
        _emit("final_train_loss", f"{curves.records[-1].train_loss:.9g}")
    if eval_report is not None:
        _emit("eval_accuracy", _fmt(eval_report.accuracy))
        _emit("eval_macro_precision", _fmt(eval_report.macro_precision))
    _emit("checkpoint", args.out)
    return EXIT_OK


def cmd_evaluate(args):
    from .data import load_dataset, membership_hash
    from .metrics import emit_artifacts
    from .train import evaluate_model, load_checkpoint

    model, meta = load_checkpoint(args.checkpoint)
    ds = load_dataset(args.dataset)
    if model.input_shape != ds.image_shape or model.n_outputs != len(ds.label_map):
        raise CommandError(
            f"topology mismatch: checkpoint expects {list(model.input_shape)} with {model.n_outputs} classes, "
            f"dataset has {list(ds.image_shape)} with {len(ds.label_map)}",
            EXIT_VALIDATION,
        )
    seed = args.seed if args.seed is not None else int(meta.get("seed", 0))
    fraction = args.split if args.split is not None else float(meta.get("split", 0.8))
    stratify = args.stratify if args.stratify is not None else bool(meta.get("stratify", False))
    if not 0.0 < fraction <= 1.0:
        raise CommandError(f"--split must lie in (0, 1], got {fraction}", EXIT_VALIDATION)
    checksum = ds.checksum
    if meta.get("dataset_checksum") not in (None, checksum):
        _emit("warning", "dataset checksum differs from the one recorded at training time")
    if args.subset == "all":
        subset = ds
    else:
        train_set, subset = _split(ds, fraction, seed, stratify)
        if args.subset == "train":
            subset = train_set
    if len(subset) == 0:
        raise CommandError("selected subset is empty", EXIT_VALIDATION)
    rep = evaluate_model(model, subset)
    if args.metrics_dir:
        emit_artifacts(None, rep, args.metrics_dir, ds.class_names)
    _emit("dataset_checksum", checksum)
    _emit("subset", args.subset)
    _emit("split_membership", membership_hash(subset))
    _emit("evaluated", rep.confusion.total)
    _emit("accuracy", _fmt(rep.accuracy))
    _emit("macro_precision", _fmt(rep.macro_precision))
    _emit("micro_precision", _fmt(rep.micro_precision))
    _emit("macro_recall", _fmt(rep.macro_recall))
    return EXIT_OK


def cmd_predict(args):
    from .data import normalize, read_image, resize_bilinear
    from .data.dataset import DEFAULT_LABEL_MAP, class_names
    from .train import load_checkpoint

    model, meta = load_checkpoint(args.checkpoint)
    grid = read_image(args.image)
    _, h, w = model.input_shape
    x = normalize(resize_bilinear(grid, h, w)).array[None]
    if x.shape[1] != model.input_shape[0]:
        raise CommandError("topology mismatch: checkpoint channel count differs from image", EXIT_VALIDATION)
    scores = model.predict_scores(x)[0]
    names = meta.get("class_names") or class_names(DEFAULT_LABEL_MAP)
    _emit("class", names[int(np.argmax(scores))])
    _emit("scores", " ".join(f"{float(s):.9g}" for s in scores))
    return EXIT_OK


def cmd_gradcheck(args):
    from . import gradcheck

    results = gradcheck.run_checks(args.seed, args.layer)
    print(gradcheck.format_table(results))
    failed = [r for r in results if not r.passed]
    for r in failed:
        print(f"error: gradient check failed for {r.name}: max relative error {r.max_rel_error:.3e} at {r.worst}",
              file=sys.stderr)
    _emit("status", "fail" if failed else "pass")
    return EXIT_GRADIENT if failed else EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cortex", description="From-scratch CNN for four-class brain MRI classification.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("prepare", help="ingest a class-folder image tree into a dataset file")
    s.add_argument("--input-dir", required=True)
    s.add_argument("--output", required=True)
    s.add_argument("--label-map", help="override, e.g. healthy=0,glioma=1,meningioma=2,pituitary=3")
    s.add_argument("--size", type=int, default=200, help="square target size (default 200)")
    s.set_defaults(func=cmd_prepare)

    s = sub.add_parser("synthesize", help="generate the synthetic disk/ring/cross/gradient set")
    s.add_argument("--dataset", help="write a dataset file here")
    s.add_argument("--image-dir", help="write PNGs in class folders here")
    s.add_argument("--per-class", type=int, default=50)
    s.add_argument("--size", type=int, default=200)
    s.add_argument("--noise", type=float, default=0.05)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_synthesize)

    s = sub.add_parser("train", help="train the classifier and write a checkpoint plus metrics")
    s.add_argument("--dataset", required=True)
    s.add_argument("--config")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True, help="checkpoint path")
    s.add_argument("--metrics-dir")
    s.add_argument("--head", choices=("softmax", "sigmoid"), default="softmax")
    s.add_argument("--split", type=float, default=0.8)
    s.add_argument("--stratify", action="store_true")
    s.add_argument("--epochs", type=int)
    s.add_argument("--batch-size", type=int)
    s.add_argument("--learning-rate", type=float)
    s.add_argument("--optimizer", choices=("sgd", "momentum", "adam"))
    s.add_argument("--loss", choices=("categorical", "binary"))
    s.add_argument("--clip-norm", type=float)
    s.add_argument("--determinism", action=argparse.BooleanOptionalAction, default=None)
    s.add_argument("--no-track-eval", dest="track_eval", action="store_false",
                   help="skip the per-epoch held-out evaluation columns")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("evaluate", help="evaluate a checkpoint on the held-out split")
    s.add_argument("--dataset", required=True)
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--metrics-dir")
    s.add_argument("--subset", choices=("test", "train", "all"), default="test")
    s.add_argument("--seed", type=int, help="defaults to the seed stored in the checkpoint")
    s.add_argument("--split", type=float, help="defaults to the split stored in the checkpoint")
    s.add_argument("--stratify", action=argparse.BooleanOptionalAction, default=None)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("predict", help="classify a single image")
    s.add_argument("--image", required=True)
    s.add_argument("--checkpoint", required=True)
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("gradcheck", help="finite-difference verification of every backward pass")
    s.add_argument("--seed", type=int, default=1)
    s.add_argument("--layer", choices=("all", "conv", "pool", "dense", "activations", "loss", "model"), default="all")
    s.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except NonFiniteError as exc:
        print(f"error: non-finite value: {exc}", file=sys.stderr)
        return EXIT_NONFINITE
    except (ValidationError, ShapeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (IngestionError, DatasetFormatError, CheckpointError, ArtifactError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
