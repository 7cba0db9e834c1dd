"""Kernel backend selection.

The hot inner loops (fused optimizer updates, fixed-width histograms) exist
twice: a numba @njit version and a pure-numpy version with identical
float32 rounding behaviour. The STOCHPRUNE_BACKEND environment variable
picks one at import time:

    STOCHPRUNE_BACKEND=numba   force numba (error if not installed)
    STOCHPRUNE_BACKEND=numpy   force the pure-numpy path
    unset                      numba when importable, else numpy

Both paths are deterministic; all randomness is drawn by the caller from
numpy Generators, never inside a kernel.
"""

import os

_ENV_VAR = "STOCHPRUNE_BACKEND"


def _select():
    choice = os.environ.get(_ENV_VAR, "").strip().lower()
    if choice not in ("", "numba", "numpy"):
        raise ValueError(
            f"{_ENV_VAR} must be 'numba' or 'numpy', got {choice!r}"
        )
    if choice == "numpy":
        return "numpy"
    try:
        import numba  # noqa: F401
    except ImportError:
        if choice == "numba":
            raise RuntimeError(
                f"{_ENV_VAR}=numba requested but numba is not installed"
            ) from None
        return "numpy"
    return "numba"


BACKEND = _select()

if BACKEND == "numba":
    from . import _kernels_numba as kernels
else:
    from . import _kernels_numpy as kernels

__all__ = ["BACKEND", "kernels"]
