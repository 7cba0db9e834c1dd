"""Command-line interface.

Subcommands: train, sweep, compare, inspect, eval. Flags override config
file values; the config file is a flat JSON object mirroring
ExperimentConfig. Exit codes: 0 success, 2 config error, 3 data error,
4 numerical divergence.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .checkpoint import CheckpointError
from .data import DataError
from .experiment import (ConfigError, ExperimentConfig, compare, evaluate,
                         inspect, make_datasets, sweep, train)
from .net import ShapeError
from .optim import DivergenceError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGED = 4


def parse_grid(text):
    """Grid syntax: 'start:stop:step' (inclusive stop) or 'p1,p2,...'."""
    text = text.strip()
    try:
        if ":" in text:
            parts = text.split(":")
            if len(parts) != 3:
                raise ValueError("expected start:stop:step")
            start, stop, step = (float(x) for x in parts)
            if step <= 0:
                raise ValueError("step must be positive")
            values = []
            p = start
            while p <= stop + 1e-9:
                values.append(round(p, 10))
                p += step
            if not values:
                raise ValueError("empty range")
            return tuple(values)
        return tuple(float(x) for x in text.split(","))
    except ValueError as e:
        raise ConfigError(f"bad grid {text!r}: {e}") from e


def _common_flags(parser):
    parser.add_argument("--config", type=Path, default=None,
                        help="JSON config file; flags override its values")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out-dir", default=None)
    parser.add_argument("--optimizer", choices=["adam", "stochgradadam"],
                        default=None)
    parser.add_argument("--sampling-rate", type=float, default=None,
                        dest="sampling_rate")
    parser.add_argument("--lr", type=float, default=None)
    parser.add_argument("--delta", type=float, default=None)
    parser.add_argument("--epochs", type=int, default=None)
    parser.add_argument("--batch-size", type=int, default=None,
                        dest="batch_size")
    parser.add_argument("--grid", type=str, default=None,
                        help="pruning rates, '0:70:5' or '0,50,100'")
    parser.add_argument("--dataset", default=None,
                        help="spirals | blobs | cifar10:<dir>")
    parser.add_argument("--width", type=int, default=None,
                        dest="hidden_width")
    parser.add_argument("--blocks", type=int, default=None)
    parser.add_argument("--classes", type=int, default=None)
    parser.add_argument("--dims", type=int, default=None)
    parser.add_argument("--train-samples", type=int, default=None,
                        dest="train_samples")
    parser.add_argument("--test-samples", type=int, default=None,
                        dest="test_samples")
    parser.add_argument("--track-bounds", action="store_true", default=None,
                        dest="track_bounds")
    parser.add_argument("--no-track-bounds", action="store_false",
                        default=None, dest="track_bounds")
    parser.add_argument("--confusion", action="store_true", default=None)


_CONFIG_KEYS = {f.name for f in dataclasses.fields(ExperimentConfig)}


def build_config(args):
    overrides = {}
    for key, value in vars(args).items():
        if key in _CONFIG_KEYS and value is not None:
            overrides[key] = value
    if overrides.get("grid") is not None:
        overrides["grid"] = parse_grid(overrides["grid"])
    if args.config is not None:
        return ExperimentConfig.from_file(args.config, overrides)
    return ExperimentConfig.from_dict(overrides)


def cmd_train(args):
    cfg = build_config(args)
    result = train(cfg)
    print(f"trained {cfg.optimizer} for {result.steps} steps; "
          f"test accuracy {result.final_test_accuracy:.4f}")
    print(f"checkpoint: {result.checkpoint_path}")
    return EXIT_OK


def cmd_sweep(args):
    cfg = build_config(args)
    dataset = None
    if args.dataset:
        dataset = make_datasets(cfg)[1]
    out_dir = args.out_dir or str(Path(args.checkpoint).parent)
    rows = sweep(args.checkpoint, cfg.grid, dataset=dataset,
                 out_dir=out_dir, confusion=bool(args.confusion))
    for row in rows:
        print(f"P={row['P']:g} psi={row['psi']:.6g} "
              f"accuracy={row['accuracy']:.4f}")
    print(f"sweep written to {Path(out_dir) / 'sweep.csv'}")
    return EXIT_OK


def cmd_compare(args):
    cfg = build_config(args)
    cfg_a = dataclasses.replace(cfg, optimizer="adam")
    cfg_b = dataclasses.replace(cfg, optimizer="stochgradadam")
    out_dir = args.out_dir or cfg.out_dir
    paired, summary = compare(cfg_a, cfg_b, cfg.grid,
                              repeats=args.repeats, out_dir=out_dir)
    for row in summary:
        keys = [k for k in row if k.startswith("mean_acc_")]
        rendered = " ".join(f"{k[5:]}={row[k]:.4f}" for k in keys)
        print(f"P={row['P']:g} {rendered}")
    print(f"comparison written to {Path(out_dir) / 'compare.csv'}")
    return EXIT_OK


def cmd_inspect(args):
    out_dir = args.out_dir or str(Path(args.checkpoint).parent)
    _, summary = inspect(args.checkpoint, out_dir=out_dir, bins=args.bins)
    w = summary["weights"]
    print(f"weights: {w['count']} std={w['std']:.6f} "
          f"zero={w['frac_zero']:.4f} in(0,1)={w['frac_abs_in_unit']:.4f}")
    print(f"histogram written to {Path(out_dir) / 'histogram.csv'}")
    return EXIT_OK


def cmd_eval(args):
    cfg = build_config(args)
    dataset = None
    if args.dataset:
        dataset = make_datasets(cfg)[1]
    result = evaluate(args.checkpoint, dataset=dataset,
                      out_dir=args.out_dir)
    print(f"accuracy {result['accuracy']:.4f} on {result['samples']} samples")
    return EXIT_OK


def make_parser():
    parser = argparse.ArgumentParser(
        prog="stochprune",
        description="Train, prune and compare Adam vs StochGradAdam models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train one model")
    _common_flags(p_train)
    p_train.set_defaults(func=cmd_train)

    p_sweep = sub.add_parser("sweep", help="prune a checkpoint at each rate")
    p_sweep.add_argument("--checkpoint", required=True)
    _common_flags(p_sweep)
    p_sweep.set_defaults(func=cmd_sweep)

    p_cmp = sub.add_parser("compare",
                           help="paired adam vs stochgradadam sweep")
    p_cmp.add_argument("--repeats", type=int, default=1,
                       help="number of seeds (seed, seed+1, ...)")
    _common_flags(p_cmp)
    p_cmp.set_defaults(func=cmd_compare)

    p_ins = sub.add_parser("inspect", help="weight histogram of a checkpoint")
    p_ins.add_argument("--checkpoint", required=True)
    p_ins.add_argument("--bins", type=int, default=None)
    _common_flags(p_ins)
    p_ins.set_defaults(func=cmd_inspect)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint")
    p_eval.add_argument("--checkpoint", required=True)
    _common_flags(p_eval)
    p_eval.set_defaults(func=cmd_eval)

    return parser


def main(argv=None):
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, CheckpointError, ShapeError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except DivergenceError as e:
        print(f"numerical divergence: {e}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
