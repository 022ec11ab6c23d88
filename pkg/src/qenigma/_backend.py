"""Kernel backend selection.

Set ``QENIGMA_BACKEND=numpy`` to force the pure-numpy kernels; the default is
``numba`` when it imports cleanly.
"""
import os

_requested = os.environ.get("QENIGMA_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ImportError(f"QENIGMA_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

try:
    import numba

    # The TBB layer is probed first and warns when the system TBB is too old;
    # OpenMP is thread-safe for the concurrent kernel calls made by the protocol
    # runner. An explicit NUMBA_THREADING_LAYER still wins.
    if "NUMBA_THREADING_LAYER" not in os.environ:
        try:
            from numba.np.ufunc import omppool  # noqa: F401

            numba.config.THREADING_LAYER = "omp"
        except ImportError:
            pass
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

BACKEND = "numba" if (_requested == "numba" and HAVE_NUMBA) else "numpy"


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, otherwise the identity decorator."""
    if HAVE_NUMBA:
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda f: f


prange = numba.prange if HAVE_NUMBA else range
