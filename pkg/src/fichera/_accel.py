"""Optional numba acceleration.

Set ``FICHERA_NO_NUMBA=1`` to force the pure-numpy kernels.
"""
import os

_DISABLED = os.environ.get("FICHERA_NO_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")

try:
    if _DISABLED:
        raise ImportError
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:
    _njit = None
    HAVE_NUMBA = False


def njit(fn):
    """Compile ``fn`` with numba when available; otherwise return it unchanged."""
    if _njit is None:
        return fn
    return _njit(cache=True, fastmath=False)(fn)


def backend():
    return "numba" if HAVE_NUMBA else "numpy"
