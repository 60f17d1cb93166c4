"""Numba switch.

Hot loops are written once as plain Python/numpy-compatible code and wrapped
with :func:`njit`.  Setting ``KRENTAL_DISABLE_NUMBA=1`` (or running without
numba installed) turns :func:`njit` into a no-op, and the kernels module then
dispatches to its vectorised numpy implementations instead.
"""
import os

_FALSEY = {"", "0", "false", "no", "off"}

try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba = None

USE_NUMBA = _numba is not None and os.environ.get("KRENTAL_DISABLE_NUMBA", "0").strip().lower() in _FALSEY


def njit(*args, **kwargs):
    """``numba.njit`` with caching and ``nogil`` on, or identity when disabled."""
    if args and callable(args[0]) and len(args) == 1 and not kwargs:
        return njit()(args[0])
    if not USE_NUMBA:
        return lambda fn: fn
    kwargs.setdefault("cache", True)
    kwargs.setdefault("nogil", True)
    return _numba.njit(*args, **kwargs)
