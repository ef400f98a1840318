"""Backend selection for the hot kernels.

Each kernel in :mod:`qkdad.kernels` exists twice: a loop version compiled with
numba and a vectorised numpy version. ``QKDAD_DISABLE_NUMBA=1`` (or a missing
numba install) routes every public kernel to the numpy version. The choice is
made once, at import time.
"""
import os

_flag = os.environ.get("QKDAD_DISABLE_NUMBA", "").strip().lower()
DISABLED_BY_ENV = _flag not in ("", "0", "false", "no")

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency here
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not DISABLED_BY_ENV


def njit(func):
    """Compile ``func`` in nopython mode if numba is importable."""
    if not HAVE_NUMBA:
        return func
    return numba.njit(cache=True, nogil=True)(func)


def pick(compiled, fallback):
    return compiled if USE_NUMBA else fallback


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
