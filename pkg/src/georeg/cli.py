"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric abort,
5 checkpoint format error.
"""

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .data import IdxFormatError, IdxLengthError, LabelRangeError, load_idx_dataset
from .config import RunConfig, apply_override, load_config
from .linear_init import NumericError
from .trainer import ConfigError, NumericAbort, evaluate, train, write_metrics

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC, EXIT_CHECKPOINT = 0, 2, 3, 4, 5

log = logging.getLogger("georeg")

_DATA_ERRORS = (OSError, IdxFormatError, IdxLengthError, LabelRangeError)


class DataError(Exception):
    pass


def _load(images, labels, limit=None, what="data"):
    if not images or not labels:
        raise DataError(f"{what}: both image and label files are required")
    try:
        return load_idx_dataset(images, labels, limit=limit)
    except _DATA_ERRORS as exc:
        raise DataError(f"{what}: {exc}") from None


def _build_config(args):
    cfg = load_config(args.config) if args.config else RunConfig()
    flag_keys = ["train_images", "train_labels", "test_images", "test_labels", "out", "metrics",
                 "workers", "seed"]
    for key in flag_keys:
        value = getattr(args, key, None)
        if value is not None:
            cfg.set_global(key, str(value))
    for assignment in args.set or []:
        apply_override(cfg, assignment)
    if not cfg.train.stages:
        raise ConfigError("config defines no [stage] sections")
    return cfg


def cmd_train(args):
    cfg = _build_config(args)
    run = cfg.run
    if not run["train_images"] or not run["train_labels"]:
        raise ConfigError("train needs train_images and train_labels (flags or config keys)")
    data = _load(run["train_images"], run["train_labels"], run["train_limit"], "training data")
    test = None
    if run["test_images"] or run["test_labels"]:
        test = _load(run["test_images"], run["test_labels"], None, "test data")
    cfg.train.validate(data.n)
    out = Path(run["out"])
    metrics_path = Path(run["metrics"]) if run["metrics"] else out.with_name("metrics.csv")
    notes = []
    model, rows = train(data, test, cfg.train, notes=notes)
    save_checkpoint(model, out)
    write_metrics(rows, metrics_path, cfg.echo() + notes)
    last = rows[-1]
    print(f"layers={len(model.layers)} train_mse={last.train_mse!r} train_acc={last.train_acc!r} "
          f"test_acc={last.test_acc!r}")
    print(f"wrote {out} and {metrics_path}")
    return EXIT_OK


def cmd_eval(args):
    model = load_checkpoint(args.checkpoint)
    splits = [("test", args.test_images, args.test_labels),
              ("train", args.train_images, args.train_labels)]
    done = 0
    for name, images, labels in splits:
        if images is None and labels is None:
            continue
        limit = args.train_limit if name == "train" else None
        data = _load(images, labels, limit, f"{name} data")
        if data.n != model.n:
            raise DataError(f"{name} data has n={data.n}, model expects {model.n}")
        loss, acc = evaluate(model, data, args.workers)
        print(f"mse={loss!r} accuracy={acc!r} split={name}")
        done += 1
    if not done:
        raise DataError("eval needs --test-images/--test-labels or --train-images/--train-labels")
    return EXIT_OK


def cmd_inspect(args):
    model = load_checkpoint(args.checkpoint)
    print(f"n: {model.n}")
    print(f"d: {model.d}")
    print(f"m: {model.m}")
    print(f"r: {model.r}")
    print(f"activation: {model.act.name}")
    print(f"layers: {len(model.layers)}")
    for i, layer in enumerate(model.layers):
        line = f"layer {i}: kind={layer.kind} mu={layer.mu!r}"
        if layer.kind == "conv":
            k = layer.V0
            line += (f" grid={layer.grid[0]}x{layer.grid[1]} window={layer.window}"
                     f" kernel_sum={float(np.sum(k))!r} kernel_min={float(k.min())!r}"
                     f" kernel_max={float(k.max())!r}")
        print(line)
    return EXIT_OK


def cmd_selftest(args):
    from .selftest import run_selftest
    return EXIT_OK if run_selftest() else EXIT_NUMERIC


def _add_data_flags(p):
    for flag in ("--train-images", "--train-labels", "--test-images", "--test-labels"):
        p.add_argument(flag)
    p.add_argument("--workers", type=int)


def build_parser():
    parser = argparse.ArgumentParser(prog="georeg",
                                     description="Forward-only layer-wise training by geometric regularization.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log every iteration")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("train", help="train a model and write a checkpoint plus metrics CSV")
    p.add_argument("--config")
    _add_data_flags(p)
    p.add_argument("--out")
    p.add_argument("--metrics")
    p.add_argument("--seed", type=int)
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="report MSE and accuracy of a checkpoint")
    p.add_argument("checkpoint")
    _add_data_flags(p)
    p.add_argument("--train-limit", type=int, default=50000)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("inspect", help="print checkpoint structure")
    p.add_argument("checkpoint")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("selftest", help="run fast numerical self-checks")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericAbort, NumericError) as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except OSError as exc:
        if getattr(args, "verb", None) in ("eval", "inspect"):
            print(f"checkpoint error: {exc}", file=sys.stderr)
            return EXIT_CHECKPOINT
        raise


if __name__ == "__main__":
    sys.exit(main())
