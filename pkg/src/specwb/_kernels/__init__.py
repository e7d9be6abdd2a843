"""Hot-loop kernels: compiled extension when built, pure NumPy otherwise.

The compiled backend (`_core`, Cython) and the pure backend (`_pure`) expose
identical functions and algorithms. SPECWB_PURE=1 forces the fallback, which
is what `benchmarks/bench_kernels.py` uses to compare the two.
"""

import os

from specwb._kernels import _pure

if os.environ.get("SPECWB_PURE") == "1":
    _impl = _pure
else:
    try:
        from specwb._kernels import _core as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _pure

BACKEND = _impl.BACKEND

STATUS_OK = _pure.STATUS_OK
STATUS_NO_CONVERGENCE = _pure.STATUS_NO_CONVERGENCE
STATUS_SEPARATION = _pure.STATUS_SEPARATION
STATUS_SINGULAR = _pure.STATUS_SINGULAR

convex_hull_batch = _impl.convex_hull_batch
segmented_hull_batch = _impl.segmented_hull_batch
logistic_irls_batch = _impl.logistic_irls_batch
nnls_batch = _impl.nnls_batch
