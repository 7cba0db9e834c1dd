"""Adam and StochGradAdam as pure state-machine updates.

StochGradAdam is Adam with two changes: each step draws an elementwise
Bernoulli(s) mask over every gradient tensor and feeds the masked gradient
phi = mask * g into both moment updates, and the decay rates are globally
decayed per step (beta_t = beta * delta**t). Bias correction divides by
1 - prod_{tau<=t} decay(tau), the unbiased form for time-varying decay;
with delta = 1 it reduces exactly to Adam's 1 - beta**t, and with s = 1
and delta = 1 the two optimizers produce identical trajectories.

Mask draws consume the mask RNG stream in parameter-registry order, then
element order (C order) within each tensor, one fresh draw per element per
step. Identical seeds therefore give bitwise-identical runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backend import kernels
from .net import DTYPE


class DivergenceError(ArithmeticError):
    """A parameter or second moment went non-finite during an update."""

    def __init__(self, path, step):
        super().__init__(
            f"non-finite values in parameter {path!r} at step {step}"
        )
        self.path = path
        self.step = step


@dataclass(frozen=True)
class HyperParams:
    """Shared knobs for both optimizers.

    mu            learning rate (> 0)
    beta1, beta2  moment decay rates in [0, 1)
    delta         per-step global decay of the betas in (0, 1]; 1 disables
    epsilon       denominator stabilizer (> 0), added outside the sqrt
    sampling_rate Bernoulli keep probability s in [0, 1]; Adam ignores it
    """

    mu: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    delta: float = 1.0
    epsilon: float = 1e-7
    sampling_rate: float = 0.8

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        for name in ("beta1", "beta2"):
            b = getattr(self, name)
            if not 0.0 <= b < 1.0:
                raise ValueError(f"{name} must be in [0, 1), got {b}")
        if not 0.0 < self.delta <= 1.0:
            raise ValueError(f"delta must be in (0, 1], got {self.delta}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if not 0.0 <= self.sampling_rate <= 1.0:
            raise ValueError(
                f"sampling_rate must be in [0, 1], got {self.sampling_rate}"
            )


class OptimizerState:
    """Per-parameter moments plus the step counter and decay products.

    t is 1 on the first update. beta1_prod/beta2_prod accumulate the
    per-step decays in float64 and feed the bias corrections.
    """

    def __init__(self, params, hyper=None, rng=None):
        self.hyper = hyper if hyper is not None else HyperParams()
        self.rng = rng
        self.m = {}
        self.v = {}
        for path, p in params:
            if not p.flags.c_contiguous or p.dtype != DTYPE:
                raise ValueError(f"parameter {path} must be contiguous float32")
            self.m[path] = np.zeros_like(p)
            self.v[path] = np.zeros_like(p)
        self.t = 0
        self.beta1_prod = 1.0
        self.beta2_prod = 1.0


def sample_mask(shape, s, rng):
    """Elementwise Bernoulli(s) mask: 1 where u < s for u ~ U[0, 1).

    Fresh draws on every call. s=0 gives all zeros; s=1 gives all ones
    (draws live in [0, 1), so u < 1 always holds).
    """
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"sampling rate must be in [0, 1], got {s}")
    u = rng.random(size=shape)
    return (u < s).astype(DTYPE)


def sampled_gradient(mask, grad):
    """phi = mask (*) grad, elementwise; zeros where the mask dropped."""
    if mask.shape != grad.shape:
        raise ValueError(
            f"mask shape {list(mask.shape)} != gradient shape "
            f"{list(grad.shape)}"
        )
    return np.where(mask != 0, grad, DTYPE(0.0))


def _gather(params, grads, state):
    for path, p in params:
        if path not in grads:
            raise ValueError(f"missing gradient for parameter {path}")
        g = grads[path]
        if g.shape != p.shape:
            raise ValueError(
                f"gradient shape {list(g.shape)} != parameter shape "
                f"{list(p.shape)} for {path}"
            )
        yield path, p, np.ascontiguousarray(g, dtype=DTYPE)


def _check_finite(state, path, p):
    if not (np.isfinite(p).all() and np.isfinite(state.v[path]).all()):
        raise DivergenceError(path, state.t)


def stochgradadam_step(state, params, grads, observer=None):
    """One StochGradAdam step over all parameters, in place.

    For each tensor in registry order: draw the mask uniforms, form phi,
    update both moments with the decayed betas, bias-correct, apply the
    update theta -= mu * m_hat / (sqrt(v_hat) + eps). The step counter
    advances once per call, not per tensor.

    observer, when given, is called as observer(path, grad, uniforms, s, t)
    before each tensor update (metrics hooks; uniforms is None for Adam).
    Returns the step's mask keep fraction. Raises DivergenceError and
    leaves the offending values in place for diagnosis.
    """
    h = state.hyper
    state.t += 1
    t = state.t
    decay1 = h.beta1 * h.delta ** t
    decay2 = h.beta2 * h.delta ** t
    state.beta1_prod *= decay1
    state.beta2_prod *= decay2
    b1t = np.float32(decay1)
    b2t = np.float32(decay2)
    c1 = np.float32(1.0 - state.beta1_prod)
    c2 = np.float32(1.0 - state.beta2_prod)
    lr = np.float32(h.mu)
    eps = np.float32(h.epsilon)
    s = float(h.sampling_rate)
    kept = 0
    total = 0
    for path, p, g in _gather(params, grads, state):
        u = state.rng.random(size=p.shape)
        if observer is not None:
            observer(path, g, u, s, t)
        kept += kernels.sga_update(
            p.ravel(), g.ravel(), u.ravel(), s,
            state.m[path].ravel(), state.v[path].ravel(),
            b1t, b2t, c1, c2, lr, eps,
        )
        total += p.size
        _check_finite(state, path, p)
    return kept / total if total else 0.0


def adam_step(state, params, grads, observer=None):
    """One standard Adam step over all parameters, in place.

    Classic exponentiated-beta bias correction (1 - beta**t, accumulated
    as a running product). delta and sampling_rate are ignored. Returns
    1.0, the degenerate keep fraction.
    """
    h = state.hyper
    state.t += 1
    t = state.t
    state.beta1_prod *= h.beta1
    state.beta2_prod *= h.beta2
    b1 = np.float32(h.beta1)
    b2 = np.float32(h.beta2)
    c1 = np.float32(1.0 - state.beta1_prod)
    c2 = np.float32(1.0 - state.beta2_prod)
    lr = np.float32(h.mu)
    eps = np.float32(h.epsilon)
    for path, p, g in _gather(params, grads, state):
        if observer is not None:
            observer(path, g, None, 1.0, t)
        kernels.adam_update(
            p.ravel(), g.ravel(),
            state.m[path].ravel(), state.v[path].ravel(),
            b1, b2, c1, c2, lr, eps,
        )
        _check_finite(state, path, p)
    return 1.0


STEP_FUNCTIONS = {
    "adam": adam_step,
    "stochgradadam": stochgradadam_step,
}
