"""Optional numba acceleration.

Set ``TIERANK_DISABLE_NUMBA=1`` to force the pure-numpy kernels. When numba
is not importable the numpy path is used automatically.
"""

import os

_FLAG = "TIERANK_DISABLE_NUMBA"


def _flag_set() -> bool:
    return os.environ.get(_FLAG, "").strip().lower() not in ("", "0", "false", "no")


try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _flag_set()


def njit(func):
    """``numba.njit(cache=True)`` when numba is available, identity otherwise."""
    if not HAVE_NUMBA:
        return func
    return numba.njit(cache=True)(func)
