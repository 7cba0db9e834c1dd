import numpy as np
import pytest

from stochprune.net import DTYPE, Dense, Model, SoftmaxCrossEntropy, build_residual_mlp


def finite_difference_grads(model, x, targets, h=1e-3):
    """Central-difference loss gradients, perturbing one float32 parameter
    component at a time. Independent of the analytic backward path."""
    out = {}
    for path, p in model.parameters():
        flat = p.ravel()
        g = np.zeros(flat.size)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = DTYPE(orig + DTYPE(h))
            hi = float(flat[i])
            loss_hi = model.loss(x, targets)
            flat[i] = DTYPE(orig - DTYPE(h))
            lo = float(flat[i])
            loss_lo = model.loss(x, targets)
            flat[i] = orig
            g[i] = (loss_hi - loss_lo) / (hi - lo)
        out[path] = g.reshape(p.shape)
    return out


def max_relative_error(analytic, numeric, floor=1e-2):
    """Elementwise |a - n| / max(|a|, |n|, floor), maximized."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float((np.abs(a - n) / denom).max())


def tiny_model(seed, in_dim=3, width=4, classes=3):
    """Small model exercising every layer kind, with a random batch."""
    rng = np.random.default_rng(seed)
    model = build_residual_mlp(in_dim, width, 1, classes, rng=rng)
    x = rng.standard_normal((4, in_dim)).astype(DTYPE)
    targets = rng.integers(0, classes, size=4)
    return model, x, targets


def linear_model(weight, bias=None):
    """Single Dense + softmax CE with explicit parameter values."""
    weight = np.asarray(weight, dtype=DTYPE)
    out_dim, in_dim = weight.shape
    model = Model([
        Dense(in_dim, out_dim, has_bias=bias is not None),
        SoftmaxCrossEntropy(out_dim),
    ])
    model.set_parameter("0.weight", weight)
    if bias is not None:
        model.set_parameter("0.bias", np.asarray(bias, dtype=DTYPE))
    return model


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
