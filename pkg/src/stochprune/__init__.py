"""Deterministic training and pruning toolkit.

Trains small residual MLP classifiers with either plain Adam or the
gradient-sampling StochGradAdam variant, prunes trained weights by global
magnitude percentile, and measures how much accuracy each optimizer's
models retain after pruning.
"""

from .backend import BACKEND
from .net import Model, build_residual_mlp, eval_accuracy
from .optim import HyperParams, OptimizerState, adam_step, stochgradadam_step
from .prune import PruneReport, apply_pruning, compute_threshold, prune_at_rate

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Model",
    "build_residual_mlp",
    "eval_accuracy",
    "HyperParams",
    "OptimizerState",
    "adam_step",
    "stochgradadam_step",
    "PruneReport",
    "apply_pruning",
    "compute_threshold",
    "prune_at_rate",
    "__version__",
]
