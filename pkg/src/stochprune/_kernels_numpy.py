"""Pure-numpy kernels, the fallback for the numba versions.

Every operation here must round exactly like its numba twin: float32
arithmetic throughout, scalars pre-cast to float32, uniforms compared in
float64. Keep the operation order in sync with _kernels_numba.
"""

import numpy as np

_ONE = np.float32(1.0)
_ZERO = np.float32(0.0)


def adam_update(p, g, m, v, b1, b2, c1, c2, lr, eps):
    """One fused Adam step on flat float32 arrays, in place.

    m <- b1*m + (1-b1)*g
    v <- b2*v + (1-b2)*g^2
    p <- p - lr * (m/c1) / (sqrt(v/c2) + eps)

    c1, c2 are the bias-correction denominators 1 - prod(decay).
    """
    m[:] = b1 * m + (_ONE - b1) * g
    v[:] = b2 * v + (_ONE - b2) * g * g
    mh = m / c1
    vh = v / c2
    p[:] = p - lr * mh / (np.sqrt(vh) + eps)


def sga_update(p, g, u, s, m, v, b1t, b2t, c1, c2, lr, eps):
    """One fused StochGradAdam step on flat float32 arrays, in place.

    The mask keeps component i iff u[i] < s; dropped components contribute
    an exact zero to both moments. Returns the number of kept components.
    """
    keep = u < s
    phi = np.where(keep, g, _ZERO)
    m[:] = b1t * m + (_ONE - b1t) * phi
    v[:] = b2t * v + (_ONE - b2t) * phi * phi
    mh = m / c1
    vh = v / c2
    p[:] = p - lr * mh / (np.sqrt(vh) + eps)
    return int(np.count_nonzero(keep))


def histogram_fixed(values, edges, counts):
    """Clamped fixed-edge histogram: bins [e_k, e_{k+1}) with the last bin
    closed on the right; out-of-range values land in the edge bins.

    values: flat float32, edges: ascending float64 (len bins+1),
    counts: int64 accumulator (len bins), incremented in place.
    """
    clipped = np.clip(values, edges[0], edges[-1])
    idx = np.searchsorted(edges, clipped, side="right") - 1
    np.clip(idx, 0, counts.size - 1, out=idx)
    counts += np.bincount(idx, minlength=counts.size).astype(np.int64)
