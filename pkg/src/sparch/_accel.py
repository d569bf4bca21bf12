"""Numba switch.

Setting ``SPARCH_DISABLE_NUMBA=1`` (or any of ``true``/``yes``/``on``) in the
environment before import routes every kernel to its numpy/scipy twin. The
same happens when numba is not importable.
"""

import os

_FLAG = os.environ.get("SPARCH_DISABLE_NUMBA", "").strip().lower()
_DISABLED = _FLAG in {"1", "true", "yes", "on"}

try:
    if _DISABLED:
        raise ImportError("disabled by SPARCH_DISABLE_NUMBA")
    import numba

    HAVE_NUMBA = True
except ImportError:
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _DISABLED


def njit(*args, **kwargs):
    """``numba.njit`` when available, otherwise a no-op decorator."""
    if HAVE_NUMBA:
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]

    def wrap(fn):
        return fn

    return wrap
