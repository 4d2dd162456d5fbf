"""Numba switch.

Set ``HETCAUSAL_DISABLE_NUMBA=1`` to run every kernel through its pure-numpy
path. The flag is read once, at import time.
"""
import os

_DISABLED = os.environ.get("HETCAUSAL_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    if _DISABLED:
        raise ImportError("numba disabled by environment")
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:
    _njit = None
    HAVE_NUMBA = False


def njit(fn=None, **kwargs):
    """``numba.njit`` when available, identity otherwise."""
    kwargs.setdefault("cache", True)

    def wrap(f):
        if HAVE_NUMBA:
            return _njit(**kwargs)(f)
        return f

    if fn is not None:
        return wrap(fn)
    return wrap


def backend():
    return "numba" if HAVE_NUMBA else "numpy"
