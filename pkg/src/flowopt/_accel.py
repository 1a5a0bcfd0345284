"""Optional numba acceleration.

Kernels are written in the numba-compatible subset of Python and decorated
with :func:`jit`. Setting ``FLOWOPT_DISABLE_NUMBA=1`` (or running without
numba installed) leaves them as plain interpreted functions over numpy arrays.
"""
from __future__ import annotations

import os
import warnings


class PerformanceWarning(UserWarning):
    pass


def _env_disabled() -> bool:
    return os.environ.get("FLOWOPT_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes"}


try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba = None

NUMBA_ENABLED = _numba is not None and not _env_disabled()

if _numba is None and not _env_disabled():  # pragma: no cover
    warnings.warn(
        "numba is not available; kernels run interpreted and costs will be far higher",
        PerformanceWarning,
        stacklevel=2,
    )


def jit(func):
    """``numba.njit(cache=True)`` when acceleration is on, identity otherwise."""
    if NUMBA_ENABLED:
        return _numba.njit(cache=True, nogil=True)(func)
    return func


def python_impl(func):
    """Return the interpreted version of a (possibly jitted) kernel."""
    return getattr(func, "py_func", func)
