"""Kernel backend selection.

The quadrature accumulation loops that dominate runtime exist in two
equivalent implementations: numba-jitted scalar loops (default) and
vectorized pure-numpy code.  Set ``GVISID_BACKEND=numpy`` before import to
force the numpy path (e.g. on platforms without a working numba, or to
benchmark one against the other).  ``GVISID_THREADS`` caps the number of
worker threads/processes used by parallel drivers.
"""

import os
import warnings

BACKEND = os.environ.get("GVISID_BACKEND", "numba").strip().lower()
if BACKEND not in ("numba", "numpy"):
    warnings.warn(f"unknown GVISID_BACKEND={BACKEND!r}, falling back to numba")
    BACKEND = "numba"

if BACKEND == "numba":
    try:
        from numba import njit, prange
        HAVE_NUMBA = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        warnings.warn("numba not importable, using the pure-numpy backend")
        BACKEND = "numpy"
        HAVE_NUMBA = False
else:
    HAVE_NUMBA = False

if not HAVE_NUMBA:
    def njit(*args, **kwargs):
        # Stand-in decorator so numba kernels can still be defined (never called).
        if args and callable(args[0]):
            return args[0]
        return lambda f: f

    prange = range


def use_numba() -> bool:
    return BACKEND == "numba"


def select(numba_impl, numpy_impl):
    """Pick the kernel implementation for the active backend."""
    return numba_impl if use_numba() else numpy_impl


def thread_count(default: int | None = None) -> int:
    """Worker count: GVISID_THREADS override, else ``default`` or cpu count."""
    env = os.environ.get("GVISID_THREADS", "").strip()
    if env:
        n = int(env)
        if n >= 1:
            return n
    if default is not None:
        return default
    return os.cpu_count() or 1
