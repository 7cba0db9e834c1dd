"""Percentile magnitude pruning over the global weight pool.

The threshold psi is the P-th percentile of sorted absolute weights,
selected by the 1-based index ceil(P/100 * |W|); a weight is zeroed iff
|w| < psi (strictly), so ties at psi always survive. By default the pool
spans every Dense weight matrix in the model; biases are never pooled or
pruned (zeroing a bias shifts logits wholesale rather than removing a
connection). Survivors keep their exact bit pattern.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .net import DTYPE


@dataclass
class PruneReport:
    percentile: float
    threshold: float
    total_weights: int
    pruned_count: int
    per_layer_zero_fraction: dict = field(default_factory=dict)
    per_layer_threshold: dict | None = None
    post_accuracy: float | None = None

    @property
    def pruned_fraction(self):
        return self.pruned_count / self.total_weights


def prunable_parameters(model):
    """(path, array) pairs eligible for pruning: Dense weight matrices."""
    return [(path, p) for path, p in model.parameters()
            if path.endswith(".weight")]


def percentile_index(percentile, count):
    """1-based rank ceil(P/100 * n), computed exactly for integral P."""
    if not 0.0 <= percentile <= 100.0:
        raise ValueError(f"percentile must be in [0, 100], got {percentile}")
    if float(percentile).is_integer():
        return (int(percentile) * count + 99) // 100
    return math.ceil(percentile * count / 100.0)


def compute_threshold(magnitudes, percentile):
    """psi = the (ceil(P/100 * n))-th smallest magnitude, 1-based.

    P = 0 maps to rank 0, defined as psi = 0 so the strict |w| < psi rule
    prunes nothing.
    """
    mags = np.asarray(magnitudes).ravel()
    if mags.size == 0:
        raise ValueError("cannot compute a percentile threshold of an "
                         "empty weight set")
    idx = percentile_index(percentile, mags.size)
    if idx == 0:
        return 0.0
    return float(np.sort(mags)[idx - 1])


def apply_pruning(model, threshold):
    """Zero every prunable weight with |w| < threshold on a copy.

    Returns (pruned model copy, PruneReport). Weights with |w| >= threshold
    are carried over bit-identically.
    """
    if threshold < 0:
        raise ValueError(f"threshold must be nonnegative, got {threshold}")
    pruned = model.copy()
    psi = DTYPE(threshold)
    total = 0
    zeroed = 0
    zero_fraction = {}
    for path, w in prunable_parameters(pruned):
        keep = np.abs(w) >= psi
        new = np.where(keep, w, DTYPE(0.0))
        pruned.set_parameter(path, new)
        total += w.size
        zeroed += int(w.size - np.count_nonzero(keep))
        zero_fraction[path] = float(np.mean(new == 0))
    report = PruneReport(
        percentile=float("nan"),
        threshold=float(psi),
        total_weights=total,
        pruned_count=zeroed,
        per_layer_zero_fraction=zero_fraction,
    )
    return pruned, report


def prune_at_rate(model, percentile, scope="global"):
    """Prune the model at percentile P.

    scope="global" (default) pools magnitudes across all prunable layers
    into one threshold; scope="per_layer" computes one threshold per weight
    matrix (comparison mode).
    """
    if scope not in ("global", "per_layer"):
        raise ValueError(f"scope must be 'global' or 'per_layer', got {scope}")
    prunable = prunable_parameters(model)
    if not prunable:
        raise ValueError("model has no prunable weights")
    if scope == "global":
        pool = np.concatenate([np.abs(w).ravel() for _, w in prunable])
        psi = compute_threshold(pool, percentile)
        pruned, report = apply_pruning(model, psi)
        report.percentile = float(percentile)
        return pruned, report

    pruned = model.copy()
    thresholds = {}
    total = 0
    zeroed = 0
    zero_fraction = {}
    for path, w in prunable_parameters(pruned):
        psi = DTYPE(compute_threshold(np.abs(w), percentile))
        thresholds[path] = float(psi)
        keep = np.abs(w) >= psi
        new = np.where(keep, w, DTYPE(0.0))
        pruned.set_parameter(path, new)
        total += w.size
        zeroed += int(w.size - np.count_nonzero(keep))
        zero_fraction[path] = float(np.mean(new == 0))
    report = PruneReport(
        percentile=float(percentile),
        threshold=float("nan"),
        total_weights=total,
        pruned_count=zeroed,
        per_layer_zero_fraction=zero_fraction,
        per_layer_threshold=thresholds,
    )
    return pruned, report
