"""Numba detection and the ``njit`` shim.

Set ``LPIGRAD_DISABLE_NUMBA=1`` to force the pure-numpy kernels even when
numba is importable. The flag is read once at import time.
"""

import os

_FALSY = {"", "0", "false", "no", "off"}


def _numba_disabled():
    return os.environ.get("LPIGRAD_DISABLE_NUMBA", "").strip().lower() not in _FALSY


try:
    import numba as _numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _numba_disabled()


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, otherwise the identity decorator.

    Functions decorated this way are always compiled when numba exists, so the
    numba path can be benchmarked and tested even when ``USE_NUMBA`` is off.
    """
    if HAVE_NUMBA:
        return _numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda f: f


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
