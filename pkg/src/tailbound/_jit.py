"""Numba switch.

Set ``TAILBOUND_NUMBA=0`` to run every hot kernel on its pure-numpy path.
"""
import os

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

USE_NUMBA = numba is not None and os.environ.get("TAILBOUND_NUMBA", "1") not in ("0", "false", "no")


def njit(fn):
    """Compile with numba when enabled, otherwise return ``fn`` untouched."""
    if USE_NUMBA:
        return numba.njit(cache=True, nogil=True)(fn)
    return fn
