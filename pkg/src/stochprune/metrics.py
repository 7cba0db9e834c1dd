"""Evaluation artifacts: confusion matrices, weight histograms, the
sampled-gradient bound tracker, and the relative accuracy loss metric.

Everything serializes to CSV (matrices: K rows of K integers; histograms:
edge,count rows) plus JSON-ready summary dicts. Accumulations run in
float64.
"""

from __future__ import annotations

import numpy as np

from .backend import kernels
from .net import predict_classes
from .prune import prunable_parameters

HIST_BINS = 101
HIST_RANGE = (-1.5, 1.5)


class ConfusionMatrix:
    """K x K counts, rows = actual class, columns = predicted class."""

    def __init__(self, counts):
        self.counts = np.asarray(counts, dtype=np.int64)
        if self.counts.ndim != 2 or self.counts.shape[0] != self.counts.shape[1]:
            raise ValueError("confusion matrix must be square")
        if (self.counts < 0).any():
            raise ValueError("confusion matrix counts must be nonnegative")

    @property
    def total(self):
        return int(self.counts.sum())

    def accuracy(self):
        return float(np.trace(self.counts) / self.total)

    def to_csv(self):
        lines = [",".join(str(int(c)) for c in row) for row in self.counts]
        return "\n".join(lines) + "\n"

    def summary(self):
        return {
            "classes": int(self.counts.shape[0]),
            "total": self.total,
            "correct": int(np.trace(self.counts)),
            "accuracy": self.accuracy(),
        }


def confusion_matrix(model, dataset, batch_size=512):
    k = model.num_classes
    labels = np.asarray(dataset.labels)
    if labels.size == 0:
        raise ValueError("cannot build a confusion matrix on an empty dataset")
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"label out of range [0, {k})")
    preds = predict_classes(model, dataset.features, batch_size)
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (labels, preds), 1)
    return ConfusionMatrix(counts)


class WeightHistogram:
    def __init__(self, bin_edges, counts, summary):
        self.bin_edges = bin_edges
        self.counts = counts
        self.summary = summary

    def to_csv(self):
        lines = ["edge,count"]
        for edge, count in zip(self.bin_edges[:-1], self.counts):
            lines.append(f"{float(edge)!r},{int(count)}")
        return "\n".join(lines) + "\n"


def weight_histogram(model, bins=HIST_BINS, value_range=HIST_RANGE):
    """Equal-width histogram of all prunable weights.

    Bins are right-open except the last, which is closed; values outside
    the range are clamped into the edge bins and also counted separately
    in the summary. Summary statistics are float64.
    """
    lo, hi = value_range
    if bins < 1:
        raise ValueError("need at least one bin")
    if not lo < hi:
        raise ValueError(f"bad histogram range [{lo}, {hi}]")
    weights = [w.ravel() for _, w in prunable_parameters(model)]
    values = np.concatenate(weights) if weights else np.zeros(0, np.float32)
    edges = np.linspace(lo, hi, bins + 1)
    counts = np.zeros(bins, dtype=np.int64)
    if values.size:
        kernels.histogram_fixed(values, edges, counts)
    v64 = values.astype(np.float64)
    absv = np.abs(v64)
    n = values.size
    summary = {
        "count": int(n),
        "mean": float(v64.mean()) if n else 0.0,
        "std": float(v64.std()) if n else 0.0,
        "frac_abs_in_unit": float(((absv > 0) & (absv < 1)).mean()) if n else 0.0,
        "frac_zero": float((v64 == 0).mean()) if n else 0.0,
        "below_range": int((v64 < lo).sum()),
        "above_range": int((v64 > hi).sum()),
    }
    return WeightHistogram(edges, counts, summary)


class BoundCheck:
    """Outcome of a tracker check: ok flag plus per-component violations."""

    def __init__(self, violations, components):
        self.violations = violations
        self.components = components

    @property
    def ok(self):
        return not self.violations


class GradientBoundTracker:
    """Per-component accumulators comparing masked and raw gradient sums.

    For a seeded fixed subset of components per parameter tensor it
    maintains, across steps t = 1..T:

        left   = sum_t |phi_t,i| / sqrt(t)
        middle = sum_t |g_t,i|   / sqrt(t)
        norm_i = ||g_1..T,i||_2

    together with the running infinity norm of the whole gradient history,
    g_inf = max over all steps and components of |g|. check() verifies the
    chain left <= middle <= 2 * g_inf * norm_i per tracked component. The
    left link is exact by construction (phi is g or 0 elementwise); the
    right link inherits the usual bounded-gradient assumption, checked
    with a small relative slack for accumulation error.
    """

    def __init__(self, params, rng, per_tensor=64):
        self.indices = {}
        self.sum_phi = {}
        self.sum_g = {}
        self.sumsq_g = {}
        self.gmax = 0.0
        self.steps = 0
        for path, p in params:
            k = min(per_tensor, p.size)
            idx = rng.choice(p.size, size=k, replace=False)
            idx.sort()
            self.indices[path] = idx
            self.sum_phi[path] = np.zeros(k)
            self.sum_g[path] = np.zeros(k)
            self.sumsq_g[path] = np.zeros(k)

    def update(self, path, g_vals, phi_vals, t, g_inf=None):
        """Fold one step's tracked component values into the accumulators.

        g_inf, when given, is the infinity norm of the full gradient tensor
        this step (defaults to the tracked components' max).
        """
        g = np.asarray(g_vals, dtype=np.float64)
        phi = np.asarray(phi_vals, dtype=np.float64)
        rt = np.sqrt(float(t))
        self.sum_phi[path] += np.abs(phi) / rt
        self.sum_g[path] += np.abs(g) / rt
        self.sumsq_g[path] += g * g
        if g_inf is None:
            g_inf = float(np.abs(g).max()) if g.size else 0.0
        self.gmax = max(self.gmax, float(g_inf))
        self.steps = max(self.steps, t)

    def observe(self, path, grad, uniforms, s, t):
        """Optimizer-step hook; extracts the tracked components."""
        idx = self.indices[path]
        flat = grad.ravel()
        g = flat[idx]
        if uniforms is None:
            phi = g
        else:
            phi = np.where(uniforms.ravel()[idx] < s, g, 0.0)
        self.update(path, g, phi, t,
                    g_inf=float(np.abs(flat).max()) if flat.size else 0.0)

    def check(self, slack=1e-4):
        violations = []
        components = 0
        for path, idx in self.indices.items():
            left = self.sum_phi[path]
            mid = self.sum_g[path]
            right = 2.0 * self.gmax * np.sqrt(self.sumsq_g[path])
            components += len(idx)
            bad = ~((left <= mid * (1 + slack) + 1e-12)
                    & (mid <= right * (1 + slack) + 1e-12))
            for j in np.nonzero(bad)[0]:
                violations.append({
                    "param": path,
                    "component": int(idx[j]),
                    "left": float(left[j]),
                    "middle": float(mid[j]),
                    "right": float(right[j]),
                })
        return BoundCheck(violations, components)


def relative_accuracy_loss(acc_base, acc_pruned):
    """Signed degradation percentage: (base - pruned) / base * 100.

    Positive means the pruned model lost accuracy; negative means it
    gained. Works on any consistent scale (fractions or percentages).
    """
    if acc_base <= 0:
        raise ValueError("baseline accuracy must be positive")
    return (acc_base - acc_pruned) / acc_base * 100.0


def format_relative_loss(value, decimals=2):
    """Render a relative loss: losses plain, gains with a '+' prefix."""
    if value < 0:
        return f"+{-value:.{decimals}f}%"
    return f"{value:.{decimals}f}%"
