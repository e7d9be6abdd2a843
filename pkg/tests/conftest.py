import numpy as np
import pytest

from specwb import Speclib


def speclib_equal(a: Speclib, b: Speclib, value_tol: float = 0.0) -> bool:
    """Value identity: spectra, grid, ids and SI all match."""
    if value_tol == 0.0:
        if not np.array_equal(a.values, b.values):
            return False
    elif not np.allclose(a.values, b.values, rtol=0, atol=value_tol):
        return False
    return (
        np.array_equal(a.wavelength, b.wavelength)
        and np.array_equal(a.fwhm, b.fwhm)
        and np.array_equal(a.ids, b.ids)
        and a.si.equals(b.si)
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_speclib(rng, n=10, bands=30, lo=400.0, hi=2400.0, positive=True):
    wl = np.linspace(lo, hi, bands)
    vals = rng.uniform(0.01 if positive else -1.0, 1.0, (n, bands))
    return Speclib(vals, wl)
