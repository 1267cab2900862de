"""Optional numba acceleration for the hot numeric kernels.

The log-density kernels in :mod:`swedge.kernels` are written in plain
numpy and compiled with ``numba.njit`` when available.  Set the
environment variable ``SWEDGE_NUMBA=0`` before import to force the pure
numpy/Python path (same code, no JIT); ``SWEDGE_NUMBA=1`` requires numba
and raises if it cannot be imported.  The default ("auto") uses numba
when importable and silently falls back otherwise.
"""

import os
import warnings

_flag = os.environ.get("SWEDGE_NUMBA", "auto").strip().lower()

NUMBA_ENABLED = False

if _flag in ("0", "false", "off", "no"):
    NUMBA_ENABLED = False
elif _flag in ("1", "true", "on", "yes"):
    import numba  # noqa: F401  (raises if unavailable, as requested)

    NUMBA_ENABLED = True
else:
    try:
        import numba  # noqa: F401

        NUMBA_ENABLED = True
    except ImportError:
        warnings.warn("numba not importable; swedge kernels run un-JITted")
        NUMBA_ENABLED = False


def maybe_njit(func):
    """Apply ``numba.njit(cache=True)`` when enabled, else return func unchanged."""
    if not NUMBA_ENABLED:
        return func
    from numba import njit

    return njit(cache=True)(func)
