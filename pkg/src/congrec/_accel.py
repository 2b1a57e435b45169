"""Optional numba acceleration.

Set ``CONGREC_DISABLE_NUMBA=1`` to force the pure-numpy kernels even when
numba is importable. The flag is read once, at import time.
"""
import os

_disabled = os.environ.get("CONGREC_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _disabled


def njit(*args, **kwargs):
    """``numba.njit(cache=True)`` when available, otherwise the identity decorator."""
    if not HAVE_NUMBA:
        if args and callable(args[0]):
            return args[0]
        return lambda f: f
    kwargs.setdefault("cache", True)
    return numba.njit(*args, **kwargs)
