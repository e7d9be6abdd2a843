"""The compiled extension and the pure fallback must agree."""

import numpy as np
import pytest

from specwb._kernels import _pure

try:
    from specwb._kernels import _core
except ImportError:
    _core = None

needs_ext = pytest.mark.skipif(_core is None, reason="compiled extension not built")


@needs_ext
def test_hulls_agree_bit_exact(rng):
    wl = np.sort(rng.uniform(400, 2500, 80))
    values = rng.uniform(0, 1, (300, 80))
    for name in ("convex_hull_batch", "segmented_hull_batch"):
        cv_p, fix_p = getattr(_pure, name)(wl, values)
        cv_c, fix_c = getattr(_core, name)(wl, values)
        assert np.array_equal(cv_p, cv_c)
        assert np.array_equal(fix_p, fix_c)


@needs_ext
def test_logistic_irls_agrees(rng):
    x = rng.normal(0, 1, (200, 15))
    x[rng.uniform(size=x.shape) < 0.05] = np.nan
    y = (rng.uniform(size=15) > 0.5).astype(float)
    res_p = _pure.logistic_irls_batch(x, y)
    res_c = _core.logistic_irls_batch(x, y)
    for a, b in zip(res_p, res_c):
        assert np.allclose(
            np.asarray(a, dtype=float), np.asarray(b, dtype=float),
            rtol=1e-10, atol=1e-10, equal_nan=True,
        )


@needs_ext
def test_nnls_agrees(rng):
    a = rng.uniform(0, 1, (25, 6))
    b = np.abs(rng.normal(0, 1, (100, 25)))
    x_p = _pure.nnls_batch(a, b)
    x_c = _core.nnls_batch(a, b)
    assert np.allclose(x_p, x_c, rtol=1e-9, atol=1e-12)
    assert x_c.min() >= 0.0


@needs_ext
def test_nnls_weighted_sum_row_same_active_set(rng):
    # the appended 1e6 sum row makes the normal equations ill conditioned, so
    # the rough solves agree only to the conditioning floor; what must match
    # is the selected active set (values are polished downstream)
    e = rng.uniform(0.05, 0.9, (4, 30))
    a = np.vstack([e.T, np.full((1, 4), 1e6)])
    b = np.column_stack([rng.uniform(0, 1, (50, 30)), np.full(50, 1e6)])
    x_p = _pure.nnls_batch(a, b)
    x_c = _core.nnls_batch(a, b)
    assert np.array_equal(x_p > 0, x_c > 0)
    assert np.allclose(x_p, x_c, rtol=0, atol=1e-3)


@needs_ext
def test_full_constraint_unmixing_agrees_after_polish(rng):
    from specwb import Speclib, unmix

    wl = np.linspace(400, 2400, 30)
    em = Speclib(rng.uniform(0.05, 0.9, (4, 30)), wl)
    s = Speclib(rng.uniform(0.0, 1.0, (50, 30)), wl)
    res = unmix(s, em, constraints="full")

    import importlib

    unmix_mod = importlib.import_module("specwb.unmix")

    class PureShim:
        nnls_batch = staticmethod(_pure.nnls_batch)

    orig = unmix_mod._kernels
    try:
        unmix_mod._kernels = PureShim()
        res_pure = unmix_mod.unmix(s, em, constraints="full")
    finally:
        unmix_mod._kernels = orig
    assert np.allclose(res.abundances, res_pure.abundances, rtol=0, atol=1e-9)


def test_pure_backend_forced_by_env(rng):
    import subprocess
    import sys

    out = subprocess.run(
        [sys.executable, "-c", "import specwb; print(specwb.kernel_backend)"],
        capture_output=True, text=True, env={"SPECWB_PURE": "1", "PATH": "/usr/bin:/bin"},
    )
    assert out.stdout.strip() == "python"
