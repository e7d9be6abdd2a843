"""Red-edge position methods on synthetic spectra."""

import numpy as np
import pytest

from specwb import FitError, SelectionError, Speclib, red_edge


def logistic_ramp(center=715.0, width=12.0, lo=0.05, hi=0.5):
    wl = np.arange(500.0, 901.0)
    vals = lo + (hi - lo) / (1.0 + np.exp(-(wl - center) / width))
    return Speclib(vals, wl)


def inverted_gaussian(lam0=690.0, sigma=25.0, rs=0.55, r0=0.06):
    wl = np.arange(500.0, 901.0)
    vals = rs - (rs - r0) * np.exp(-((wl - lam0) ** 2) / (2 * sigma * sigma))
    return Speclib(vals, wl)


class TestLinearInterpolation:
    def test_logistic_ramp_near_center(self):
        res = red_edge(logistic_ramp(center=715.0), "linear_interpolation")
        assert res[0].reip == pytest.approx(715.0, abs=5.0)

    def test_formula_oracle(self):
        s = logistic_ramp()
        r = {w: s.values[0, int(w - 500)] for w in (670.0, 700.0, 740.0, 780.0)}
        expected = 700 + 40 * (((r[670.0] + r[780.0]) / 2 - r[700.0]) / (r[740.0] - r[700.0]))
        res = red_edge(s, "linear_interpolation")
        assert res[0].reip == pytest.approx(expected, abs=1e-12)

    def test_affine_invariance(self):
        s = logistic_ramp()
        base = red_edge(s, "linear_interpolation")[0].reip
        shifted = red_edge(s.replace(values=3.0 * s.values + 0.2), "linear_interpolation")
        assert shifted[0].reip == pytest.approx(base, abs=1e-9)

    def test_flat_spectrum_errors(self):
        wl = np.arange(500.0, 901.0)
        s = Speclib(np.full((1, wl.size), 0.3), wl)
        with pytest.raises(FitError, match="no red edge"):
            red_edge(s, "linear_interpolation")


class TestLinearExtrapolation:
    def test_ramp_recovered_near_center(self):
        res = red_edge(logistic_ramp(center=718.0), "linear_extrapolation")
        assert res[0].reip == pytest.approx(718.0, abs=8.0)

    def test_flat_spectrum_errors(self):
        wl = np.arange(500.0, 901.0)
        s = Speclib(np.full((1, wl.size), 0.3), wl)
        with pytest.raises(FitError, match="no red edge"):
            red_edge(s, "linear_extrapolation")


class TestGaussianFit:
    def test_exact_inverted_gaussian(self):
        res = red_edge(inverted_gaussian(lam0=690.0, sigma=25.0), "gaussian_fit")
        assert res[0].reip == pytest.approx(715.0, abs=0.5)
        assert res[0].auxiliary["lambda0"] == pytest.approx(690.0, abs=0.5)
        assert res[0].auxiliary["sigma"] == pytest.approx(25.0, abs=0.5)

    def test_flat_spectrum_errors(self):
        wl = np.arange(500.0, 901.0)
        s = Speclib(np.full((1, wl.size), 0.3), wl)
        with pytest.raises(FitError, match="no red edge"):
            red_edge(s, "gaussian_fit")

    def test_noisy_fit_still_converges(self):
        rng = np.random.default_rng(7)
        s = inverted_gaussian()
        noisy = s.replace(values=s.values + rng.normal(0, 1e-3, s.values.shape))
        res = red_edge(noisy, "gaussian_fit")
        assert res[0].reip == pytest.approx(715.0, abs=2.0)


class TestValidation:
    def test_missing_coverage(self):
        s = Speclib(np.ones((1, 10)), np.linspace(400, 650, 10))
        with pytest.raises(SelectionError, match="coverage"):
            red_edge(s, "linear_interpolation")

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            red_edge(logistic_ramp(), "cubic")

    def test_out_of_range_position_warns(self):
        s = logistic_ramp(center=790.0)
        with pytest.warns(UserWarning, match="plausible"):
            red_edge(s, "linear_interpolation")
