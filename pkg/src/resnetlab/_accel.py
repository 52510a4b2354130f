"""Optional numba acceleration.

Set ``RESNETLAB_NUMBA=0`` before import to force the pure-numpy kernels.
Results are identical up to floating point summation order.
"""
import os

USE_NUMBA = os.environ.get("RESNETLAB_NUMBA", "1").strip().lower() not in ("0", "false", "no", "off")

try:
    from numba import njit as _njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False
    _njit = None

ENABLED = USE_NUMBA and HAVE_NUMBA


def njit(func):
    """Compile ``func`` with numba when available, else return it untouched."""
    if _njit is None:
        return func
    return _njit(cache=True)(func)
