"""Kernel backend selection.

The hot numeric loops live in :mod:`epoch_active.kernels`.  By default they
are compiled with numba's ``@njit``; setting ``EPOCH_ACTIVE_BACKEND=numpy``
runs the very same functions uncompiled as plain NumPy/Python, which is
useful for debugging and as a fallback on platforms without numba.

The flag is read once at import time.  Valid values: ``auto`` (default),
``numba``, ``numpy``.
"""

import os

ENV_FLAG = "EPOCH_ACTIVE_BACKEND"


def _resolve() -> str:
    value = os.environ.get(ENV_FLAG, "auto").strip().lower() or "auto"
    if value not in ("auto", "numba", "numpy"):
        raise ValueError(
            f"{ENV_FLAG} must be one of 'auto', 'numba', 'numpy'; got {value!r}"
        )
    if value == "numpy":
        return "numpy"
    try:
        import numba  # noqa: F401
    except ImportError:
        if value == "numba":
            raise
        return "numpy"
    return "numba"


BACKEND = _resolve()

if BACKEND == "numba":
    from numba import njit

    def jit_kernel(fn):
        return njit(cache=True)(fn)

else:

    def jit_kernel(fn):
        return fn
