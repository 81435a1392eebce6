"""Optional numba acceleration.

Set ``SPINRISK_DISABLE_NUMBA=1`` to force the pure-numpy code paths, e.g. to
debug a kernel or to run on a platform without numba wheels.
"""
import os

_FLAG = "SPINRISK_DISABLE_NUMBA"

DISABLED_BY_ENV = os.environ.get(_FLAG, "").strip().lower() in {"1", "true", "yes", "on"}

try:
    import numba
    from numba import njit
    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda fn: fn

USE_NUMBA = HAS_NUMBA and not DISABLED_BY_ENV


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
