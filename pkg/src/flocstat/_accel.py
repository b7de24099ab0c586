"""Numba switch.

Set ``FLOCSTAT_DISABLE_NUMBA=1`` before import to run every kernel through its
pure Python/NumPy path.  Numba compilation is lazy and cached on disk.
"""
from __future__ import annotations

import os

_FLAG = os.environ.get("FLOCSTAT_DISABLE_NUMBA", "").strip().lower()
_DISABLED = _FLAG in {"1", "true", "yes", "on"}

try:
    if _DISABLED:
        raise ImportError
    from numba import njit as _numba_njit

    NUMBA_ENABLED = True
except ImportError:  # pragma: no cover - exercised via env flag
    _numba_njit = None
    NUMBA_ENABLED = False


def njit(*args, **kwargs):
    """``numba.njit`` when enabled, identity decorator otherwise."""
    if NUMBA_ENABLED:
        kwargs.setdefault("cache", True)
        return _numba_njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda fn: fn


def max_workers() -> int:
    """Worker cap for data-parallel grids, from ``FLOCSTAT_THREADS``."""
    raw = os.environ.get("FLOCSTAT_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return max(1, os.cpu_count() or 1)
