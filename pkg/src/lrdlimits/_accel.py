"""Numba dispatch.

Hot kernels ship in two versions: an @njit one and a vectorized numpy one.
``HAS_NUMBA`` reflects what this process will actually use; setting the
environment variable LRDLIMITS_DISABLE_NUMBA (to anything non-empty) forces
the numpy path even when numba is installed.
"""
import os

HAS_NUMBA = False
if not os.environ.get("LRDLIMITS_DISABLE_NUMBA"):
    try:
        from numba import njit, prange  # noqa: F401

        HAS_NUMBA = True
    except ImportError:
        pass

if not HAS_NUMBA:

    def njit(*args, **kwargs):
        """Decorator stub so kernel modules import cleanly without numba."""

        def wrap(fn):
            return fn

        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return wrap

    prange = range
