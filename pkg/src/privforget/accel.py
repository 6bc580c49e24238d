"""Optional numba acceleration.

Hot loops (the microaggregation distance scans in particular) exist in two
variants: a numba ``@njit`` kernel and a pure-numpy twin.  Which one runs is
decided once at import time:

* if numba is importable and the environment variable ``PRIVFORGET_NUMBA``
  is unset or not ``"0"``, the jitted kernels are used;
* otherwise the numpy implementations are used.

Both variants implement the same algorithm with the same deterministic
tie-breaking, so results agree exactly on data where the floating-point
reductions are exact (e.g. integer-valued features).  ``benchmarks/``
contains a script comparing the two.
"""
from __future__ import annotations

import functools
import os

try:
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via PRIVFORGET_NUMBA=0
    numba = None
    _HAVE_NUMBA = False

NUMBA_ENABLED = _HAVE_NUMBA and os.environ.get("PRIVFORGET_NUMBA", "1") != "0"


def njit(*args, **kwargs):
    """``numba.njit`` when acceleration is on, identity decorator otherwise."""
    if NUMBA_ENABLED:
        return numba.njit(*args, **kwargs)

    def wrap(func):
        @functools.wraps(func)
        def inner(*a, **kw):
            return func(*a, **kw)

        return inner

    if len(args) == 1 and callable(args[0]) and not kwargs:
        return wrap(args[0])
    return wrap
