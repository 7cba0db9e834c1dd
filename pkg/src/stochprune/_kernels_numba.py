"""Numba @njit kernels for the hot elementwise loops.

Single fused pass per parameter tensor instead of numpy's one pass per
elementwise op. Arithmetic is float32 with float32 scalars so results are
bit-identical to _kernels_numpy (verified by tests). No fastmath, no
parallel: determinism over speed tricks.
"""

import numpy as np
from numba import njit

_ONE = np.float32(1.0)
_ZERO = np.float32(0.0)


@njit(cache=True)
def adam_update(p, g, m, v, b1, b2, c1, c2, lr, eps):
    one = _ONE
    for i in range(p.size):
        m[i] = b1 * m[i] + (one - b1) * g[i]
        v[i] = b2 * v[i] + (one - b2) * g[i] * g[i]
        mh = m[i] / c1
        vh = v[i] / c2
        p[i] = p[i] - lr * mh / (np.sqrt(vh) + eps)


@njit(cache=True)
def sga_update(p, g, u, s, m, v, b1t, b2t, c1, c2, lr, eps):
    one = _ONE
    zero = _ZERO
    kept = 0
    for i in range(p.size):
        if u[i] < s:
            phi = g[i]
            kept += 1
        else:
            phi = zero
        m[i] = b1t * m[i] + (one - b1t) * phi
        v[i] = b2t * v[i] + (one - b2t) * phi * phi
        mh = m[i] / c1
        vh = v[i] / c2
        p[i] = p[i] - lr * mh / (np.sqrt(vh) + eps)
    return kept


@njit(cache=True)
def histogram_fixed(values, edges, counts):
    nbins = counts.size
    lo = edges[0]
    hi = edges[-1]
    for i in range(values.size):
        x = values[i]
        if x < lo:
            x = lo
        elif x > hi:
            x = hi
        j = np.searchsorted(edges, x, side="right") - 1
        if j < 0:
            j = 0
        elif j >= nbins:
            j = nbins - 1
        counts[j] += 1
