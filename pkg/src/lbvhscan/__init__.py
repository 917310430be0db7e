"""Linear BVH spatial search and union-find DBSCAN."""

import os as _os

if "NUMBA_THREADING_LAYER" not in _os.environ:
    # the bundled TBB is often too old and numba warns on every parallel
    # launch; prefer OpenMP when it is available
    try:
        import numba as _numba
        import numba.np.ufunc.omppool  # noqa: F401

        _numba.config.THREADING_LAYER = "omp"
    except ImportError:
        pass

__version__ = "0.1.0"
