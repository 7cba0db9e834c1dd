"""Experiment orchestration: training runs, prune sweeps, optimizer
comparisons, checkpoint inspection.

Every run is a pure function of (config, seed): data, init and mask
randomness come from independently labeled substreams of the master seed,
batches are fixed-order slices, and all outputs (checkpoint, CSVs, JSON)
are written without timestamps, so identical configs produce byte-identical
artifacts.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from . import data as data_mod
from .data import DataError, Dataset, stream_rng
from .metrics import (GradientBoundTracker, confusion_matrix,
                      format_relative_loss, relative_accuracy_loss,
                      weight_histogram)
from .net import build_residual_mlp, eval_accuracy
from .optim import STEP_FUNCTIONS, DivergenceError, HyperParams, OptimizerState
from .prune import prune_at_rate


class ConfigError(ValueError):
    """Invalid experiment configuration."""


DEFAULT_GRID = tuple(range(0, 75, 5))


@dataclass
class ExperimentConfig:
    # model
    hidden_width: int = 64
    blocks: int = 3
    classes: int = 10
    has_bias: bool = True
    # optimizer
    optimizer: str = "stochgradadam"
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    delta: float = 1.0
    epsilon: float = 1e-7
    sampling_rate: float = 0.8
    # data
    dataset: str = "spirals"
    train_samples: int = 5000
    test_samples: int = 1000
    dims: int = 16
    normalize: bool = False
    # loop
    epochs: int = 60
    batch_size: int = 128
    seed: int = 0
    out_dir: str = "runs/out"
    grid: tuple = DEFAULT_GRID
    # metric toggles
    track_bounds: bool = True
    histograms: bool = False
    confusion: bool = False

    def __post_init__(self):
        if self.optimizer not in STEP_FUNCTIONS:
            raise ConfigError(
                f"optimizer must be one of {sorted(STEP_FUNCTIONS)}, "
                f"got {self.optimizer!r}"
            )
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.hidden_width < 0 or self.blocks < 0:
            raise ConfigError("hidden_width and blocks must be nonnegative")
        grid = tuple(float(p) for p in self.grid)
        if any(not 0 <= p <= 100 for p in grid):
            raise ConfigError(f"grid values must lie in [0, 100]: {grid}")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError(f"grid must be strictly increasing: {grid}")
        self.grid = grid
        try:
            self.hyper()
        except ValueError as e:
            raise ConfigError(str(e)) from e

    def hyper(self):
        return HyperParams(
            mu=self.lr, beta1=self.beta1, beta2=self.beta2,
            delta=self.delta, epsilon=self.epsilon,
            sampling_rate=self.sampling_rate,
        )

    def to_dict(self):
        out = dataclasses.asdict(self)
        out["grid"] = list(self.grid)
        return out

    @classmethod
    def from_dict(cls, values):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**values)

    @classmethod
    def from_file(cls, path, overrides=None):
        try:
            raw = json.loads(Path(path).read_text())
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"config {path} is not valid JSON: {e}") from e
        if not isinstance(raw, dict):
            raise ConfigError(f"config {path} must be a JSON object")
        if overrides:
            raw.update(overrides)
        return cls.from_dict(raw)


def make_datasets(cfg):
    """(train, test) pair for the config's dataset spec."""
    name = cfg.dataset
    if name in ("spirals", "blobs", "gaussian_blobs"):
        kind = "spirals" if name == "spirals" else "gaussian_blobs"
        train = data_mod.generate_synthetic(
            kind, cfg.classes, cfg.train_samples, cfg.dims, cfg.seed, "train")
        test = data_mod.generate_synthetic(
            kind, cfg.classes, cfg.test_samples, cfg.dims, cfg.seed, "test")
        return train, test
    if name.startswith("cifar10:"):
        directory = name.split(":", 1)[1]
        if not directory:
            raise ConfigError("cifar10 dataset needs a directory: "
                              "cifar10:<dir>")
        if cfg.classes != 10:
            raise ConfigError("cifar10 has 10 classes; set classes=10")
        return data_mod.load_cifar10(directory, normalize=cfg.normalize)
    raise ConfigError(
        f"dataset must be spirals, blobs or cifar10:<dir>, got {name!r}"
    )


def _write_csv(path, header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    Path(path).write_text(buf.getvalue())


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


@dataclass
class TrainResult:
    model: object
    config: ExperimentConfig
    checkpoint_path: Path
    steps: int
    final_test_accuracy: float
    step_rows: list
    epoch_rows: list
    bound_violations: int
    diverged: bool = False


def train(cfg, out_dir=None):
    """Train per config; writes checkpoint.sgap, runlog.csv, epochs.csv
    and summary.json under out_dir (default: cfg.out_dir).

    On divergence the last finite parameters are checkpointed, artifacts
    are flushed, and DivergenceError propagates to the caller.
    """
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train_set, test_set = make_datasets(cfg)
    model = build_residual_mlp(
        train_set.dims, cfg.hidden_width, cfg.blocks, cfg.classes,
        cfg.has_bias, rng=stream_rng(cfg.seed, data_mod.STREAM_INIT),
    )
    state = OptimizerState(
        model.parameters(), cfg.hyper(),
        rng=stream_rng(cfg.seed, data_mod.STREAM_MASK),
    )
    step_fn = STEP_FUNCTIONS[cfg.optimizer]
    tracker = None
    if cfg.track_bounds:
        tracker = GradientBoundTracker(
            model.parameters(), stream_rng(cfg.seed, data_mod.STREAM_TRACK))

    features, labels = train_set.features, train_set.labels
    n = len(train_set)
    step_rows = []
    epoch_rows = []
    violations = 0
    diverged_at = None
    step = 0

    def snapshot():
        return [(path, p.copy()) for path, p in model.parameters()]

    def losses_mean(losses):
        return float(np.mean(losses)) if losses else float("nan")

    last_good = snapshot()
    for epoch in range(cfg.epochs):
        epoch_losses = []
        for start in range(0, n, cfg.batch_size):
            xb = features[start:start + cfg.batch_size]
            yb = labels[start:start + cfg.batch_size]
            last_good = snapshot()
            try:
                logits = model.forward(xb)
                batch_acc = float(np.mean(np.argmax(logits, axis=1) == yb))
                grads, loss = model.backward(yb)
                if not np.isfinite(loss):
                    raise DivergenceError("loss", state.t + 1)
                keep = step_fn(state, model.parameters(), grads,
                               observer=tracker.observe if tracker else None)
            except (DivergenceError, ArithmeticError) as err:
                for path, saved in last_good:
                    model.set_parameter(path, saved)
                diverged_at = step + 1
                _finish_train(out, cfg, model, state, train_set, step_rows,
                              epoch_rows, violations, tracker, test_set,
                              diverged_at)
                raise DivergenceError(
                    getattr(err, "path", "loss"), diverged_at) from err
            step += 1
            epoch_losses.append(loss)
            bounds_ok = ""
            if tracker is not None:
                result = tracker.check()
                bounds_ok = int(result.ok)
                violations = len(result.violations)
            step_rows.append((step, epoch, repr(loss), repr(batch_acc),
                              repr(keep), bounds_ok))
        test_acc = eval_accuracy(model, test_set)
        epoch_rows.append((epoch, repr(losses_mean(epoch_losses)),
                           repr(test_acc)))

    return _finish_train(out, cfg, model, state, train_set, step_rows,
                         epoch_rows, violations, tracker, test_set, None)


def _finish_train(out, cfg, model, state, train_set, step_rows, epoch_rows,
                  violations, tracker, test_set, diverged_at):
    final_acc = eval_accuracy(model, test_set)
    meta = {
        "model": {
            "input_dim": train_set.dims,
            "hidden_width": cfg.hidden_width,
            "blocks": cfg.blocks,
            "classes": cfg.classes,
            "has_bias": cfg.has_bias,
        },
        "optimizer": {"name": cfg.optimizer,
                      **dataclasses.asdict(cfg.hyper())},
        "step": state.t,
        "rng_state": _json_safe(state.rng.bit_generator.state)
        if state.rng is not None else None,
        "dataset": {"train": train_set.provenance,
                    "test": test_set.provenance},
        "diverged_at_step": diverged_at,
    }
    ckpt_path = out / "checkpoint.sgap"
    ckpt.save_checkpoint(ckpt_path, model, meta)
    _write_csv(out / "runlog.csv",
               ["step", "epoch", "loss", "batch_accuracy", "keep_fraction",
                "bounds_ok"],
               step_rows)
    _write_csv(out / "epochs.csv",
               ["epoch", "mean_loss", "test_accuracy"],
               epoch_rows)
    keep_values = [float(r[4]) for r in step_rows]
    summary = {
        "config": cfg.to_dict(),
        "steps": state.t,
        "final_test_accuracy": final_acc,
        "mean_keep_fraction": float(np.mean(keep_values))
        if keep_values else None,
        "bound_components": tracker.check().components if tracker else None,
        "bound_violations": violations if tracker else None,
        "diverged_at_step": diverged_at,
    }
    _write_json(out / "summary.json", summary)
    return TrainResult(
        model=model, config=cfg, checkpoint_path=ckpt_path, steps=state.t,
        final_test_accuracy=final_acc, step_rows=step_rows,
        epoch_rows=epoch_rows, bound_violations=violations or 0,
        diverged=diverged_at is not None,
    )


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def dataset_for_checkpoint(meta, split="test"):
    """Regenerate the dataset a checkpoint recorded, bit-exactly."""
    prov = meta.get("dataset") or {}
    prov = prov.get(split, prov)
    kind = prov.get("kind")
    if kind in ("spirals", "gaussian_blobs"):
        return data_mod.generate_synthetic(
            kind, prov["classes"], prov["samples"], prov["dims"],
            prov["seed"], prov.get("split", split))
    if kind == "cifar10":
        pair = data_mod.load_cifar10(prov["dir"],
                                     normalize=prov.get("normalize", False))
        return pair[1 if split == "test" else 0]
    raise DataError(
        f"checkpoint has no usable dataset provenance ({kind!r}); "
        "pass --dataset"
    )


def sweep(checkpoint_path, grid, dataset=None, out_dir=None,
          confusion=False, scope="global"):
    """Prune one checkpoint at each rate in the grid and evaluate.

    Returns the row dicts and writes sweep.csv (columns P, psi,
    pruned_fraction, accuracy, relative_loss) plus optional per-rate
    confusion matrices.
    """
    model, meta = ckpt.load_model(checkpoint_path)
    if dataset is None:
        dataset = dataset_for_checkpoint(meta)
    base_acc = eval_accuracy(model, dataset)
    rows = []
    for p in grid:
        pruned, report = prune_at_rate(model, p, scope=scope)
        acc = eval_accuracy(pruned, dataset)
        report.post_accuracy = acc
        rel = relative_accuracy_loss(base_acc, acc)
        rows.append({
            "P": float(p),
            "psi": report.threshold,
            "pruned_fraction": report.pruned_fraction,
            "accuracy": acc,
            "relative_loss": rel,
        })
        if confusion and out_dir is not None:
            cm = confusion_matrix(pruned, dataset)
            Path(out_dir, f"confusion_P{int(p)}.csv").write_text(cm.to_csv())
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "sweep.csv",
                   ["P", "psi", "pruned_fraction", "accuracy",
                    "relative_loss"],
                   [(f"{r['P']:g}", repr(r["psi"]),
                     repr(r["pruned_fraction"]), repr(r["accuracy"]),
                     format_relative_loss(r["relative_loss"]))
                    for r in rows])
    return rows


def compare(config_a, config_b, grid, repeats=1, out_dir=None):
    """Train both configs (which may differ only in the optimizer), sweep
    both, and report paired accuracies per rate across `repeats` seeds.

    Both arms share the data and init streams (same master seed per
    repeat); the mask stream is drawn from the same substream label but
    only consumed by the gradient-sampling arm.
    """
    diffs = {
        k for k in config_a.to_dict()
        if k not in ("optimizer", "out_dir")
        and config_a.to_dict()[k] != config_b.to_dict()[k]
    }
    if diffs:
        raise ConfigError(
            f"compare arms may differ only in the optimizer; also differ "
            f"in {sorted(diffs)}"
        )
    out = Path(out_dir if out_dir is not None else config_a.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    arms = {"a": config_a, "b": config_b}
    names = {k: arms[k].optimizer for k in arms}
    if names["a"] == names["b"]:
        names = {k: f"{v}_{k}" for k, v in names.items()}
    paired = []
    for r in range(repeats):
        per_arm = {}
        for key, base in arms.items():
            cfg = dataclasses.replace(
                base, seed=base.seed + r,
                out_dir=str(out / f"seed{base.seed + r}_{names[key]}"))
            result = train(cfg)
            _, test_set = make_datasets(cfg)
            rows = sweep(result.checkpoint_path, grid, dataset=test_set,
                         out_dir=cfg.out_dir)
            per_arm[key] = rows
        for ra, rb in zip(per_arm["a"], per_arm["b"]):
            paired.append({
                "seed": config_a.seed + r,
                "P": ra["P"],
                f"acc_{names['a']}": ra["accuracy"],
                f"acc_{names['b']}": rb["accuracy"],
                f"rel_loss_{names['a']}": ra["relative_loss"],
                f"rel_loss_{names['b']}": rb["relative_loss"],
                "delta_acc": rb["accuracy"] - ra["accuracy"],
            })
    header = ["seed", "P", f"acc_{names['a']}", f"acc_{names['b']}",
              f"rel_loss_{names['a']}", f"rel_loss_{names['b']}",
              "delta_acc"]
    _write_csv(out / "compare.csv", header,
               [[row["seed"], f"{row['P']:g}"] +
                [repr(row[h]) for h in header[2:]] for row in paired])

    summary_rows = []
    for p in grid:
        rows_p = [row for row in paired if row["P"] == float(p)]
        cols = {}
        for field_name in header[2:]:
            vals = np.array([row[field_name] for row in rows_p])
            cols[f"mean_{field_name}"] = float(vals.mean())
            cols[f"std_{field_name}"] = float(vals.std())
        summary_rows.append({"P": float(p), **cols})
    sum_header = ["P"] + [k for k in summary_rows[0] if k != "P"]
    _write_csv(out / "compare_summary.csv", sum_header,
               [[f"{row['P']:g}"] + [repr(row[k]) for k in sum_header[1:]]
                for row in summary_rows])
    return paired, summary_rows


def inspect(checkpoint_path, out_dir=None, bins=None, value_range=None):
    """Weight histogram CSV plus a JSON summary for one checkpoint."""
    model, meta = ckpt.load_model(checkpoint_path)
    kwargs = {}
    if bins is not None:
        kwargs["bins"] = bins
    if value_range is not None:
        kwargs["value_range"] = value_range
    hist = weight_histogram(model, **kwargs)
    summary = {
        "checkpoint": Path(checkpoint_path).name,
        "step": meta.get("step"),
        "optimizer": (meta.get("optimizer") or {}).get("name"),
        "weights": hist.summary,
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "histogram.csv").write_text(hist.to_csv())
        _write_json(out / "inspect.json", summary)
    return hist, summary


def evaluate(checkpoint_path, dataset=None, out_dir=None):
    """Accuracy of a checkpoint on a dataset (default: its recorded one)."""
    model, meta = ckpt.load_model(checkpoint_path)
    if dataset is None:
        dataset = dataset_for_checkpoint(meta)
    acc = eval_accuracy(model, dataset)
    result = {
        "checkpoint": Path(checkpoint_path).name,
        "samples": len(dataset),
        "accuracy": acc,
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "eval.json", result)
    return result
