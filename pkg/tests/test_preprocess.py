"""Filters, derivatives, resampling."""

import numpy as np
import pytest

from specwb import FilterSpec, SensorBandSpec, Speclib, derivative, noise_filter, spectral_resample
from specwb.errors import GridError, SelectionError
from specwb.preprocess import fwhm_to_sigma

from conftest import random_speclib

ALL_SPECS = [
    FilterSpec("savitzky_golay", window=7, poly_order=2),
    FilterSpec("mean", window=5),
    FilterSpec("lowess", fraction=0.3),
    FilterSpec("spline", window=7),
]


def brute_force_mean(values, window):
    """Independent oracle: symmetric reflection padding + plain window mean."""
    half = window // 2
    out = np.empty_like(values)
    for i, row in enumerate(values):
        padded = np.concatenate([row[:half][::-1], row, row[-half:][::-1]])
        for k in range(row.size):
            out[i, k] = padded[k : k + window].sum() / window
    return out


class TestFilterSpec:
    def test_even_window_rejected(self):
        with pytest.raises(ValueError, match="odd"):
            FilterSpec("mean", window=4)

    def test_order_below_window(self):
        with pytest.raises(ValueError):
            FilterSpec("savitzky_golay", window=5, poly_order=5)

    def test_fraction_bounds(self):
        with pytest.raises(ValueError):
            FilterSpec("lowess", fraction=0.0)

    def test_sgolay_alias(self):
        assert FilterSpec("sgolay").method == "savitzky_golay"

    def test_unknown_method(self):
        with pytest.raises(ValueError, match="unknown filter"):
            FilterSpec("boxcar")


class TestNoiseFilter:
    @pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: s.method)
    def test_constants_are_fixed_points(self, spec):
        s = Speclib(np.full((3, 25), 0.7), np.linspace(400, 880, 25))
        out = noise_filter(s, spec)
        assert np.allclose(out.values, 0.7, rtol=0, atol=1e-12)

    @pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: s.method)
    def test_linearity(self, spec, rng):
        s1 = random_speclib(rng, n=4, bands=31)
        s2 = s1.replace(values=rng.uniform(0, 1, (4, 31)))
        mixed = s1.replace(values=2.5 * s1.values - 1.25 * s2.values)
        lhs = noise_filter(mixed, spec).values
        rhs = 2.5 * noise_filter(s1, spec).values - 1.25 * noise_filter(s2, spec).values
        assert np.allclose(lhs, rhs, rtol=0, atol=1e-12)

    @pytest.mark.parametrize("window,order", [(7, 2), (11, 3), (15, 4)])
    def test_savitzky_golay_reproduces_polynomials(self, window, order):
        wl = np.linspace(400, 1000, 61)
        coef = [0.4, 1e-3, -2e-6, 1e-9, -5e-13][: order + 1]
        poly = sum(c * (wl - 700.0) ** p for p, c in enumerate(coef))
        s = Speclib(np.vstack([poly, 2 * poly]), wl)
        out = noise_filter(s, FilterSpec("savitzky_golay", window=window, poly_order=order))
        assert np.allclose(out.values, s.values, rtol=0, atol=1e-9)

    def test_savitzky_golay_polynomials_on_nonuniform_grid(self, rng):
        wl = np.sort(rng.uniform(400, 900, 41))
        poly = 0.2 + 1e-3 * wl - 7e-7 * wl**2
        out = noise_filter(Speclib(poly, wl), FilterSpec("savitzky_golay", window=9, poly_order=2))
        assert np.allclose(out.values[0], poly, rtol=0, atol=1e-9)

    def test_mean_filter_matches_brute_force(self):
        # hand/brute-force oracle with symmetric reflection padding
        values = np.array([[0.0, 3.0, 0.0, 3.0, 0.0]])
        expected = brute_force_mean(values, 3)
        assert np.array_equal(expected, [[1.0, 1.0, 2.0, 1.0, 1.0]])
        s = Speclib(values, [400, 500, 600, 700, 800])
        out = noise_filter(s, FilterSpec("mean", window=3))
        assert np.allclose(out.values, expected, rtol=0, atol=1e-15)

    def test_mean_filter_matches_brute_force_random(self, rng):
        values = rng.uniform(0, 1, (5, 21))
        s = Speclib(values, np.linspace(400, 800, 21))
        out = noise_filter(s, FilterSpec("mean", window=7))
        assert np.allclose(out.values, brute_force_mean(values, 7), rtol=0, atol=1e-14)

    def test_window_larger_than_grid_errors(self):
        s = Speclib(np.ones((1, 5)), np.linspace(400, 480, 5))
        with pytest.raises(SelectionError):
            noise_filter(s, FilterSpec("mean", window=7))

    def test_grid_unchanged(self, rng):
        s = random_speclib(rng, bands=15)
        out = noise_filter(s, FilterSpec("lowess", fraction=0.5))
        assert np.array_equal(out.wavelength, s.wavelength)
        assert np.array_equal(out.ids, s.ids)


class TestDerivative:
    def test_linear_spectrum_constant_slope(self):
        wl = np.linspace(400, 900, 26)
        s = Speclib(0.1 + 0.002 * wl, wl)
        out = derivative(s, order=1)
        assert np.allclose(out.values, 0.002, rtol=0, atol=1e-12)

    def test_constant_spectrum_zero_derivative(self):
        s = Speclib(np.full((2, 10), 0.5), np.linspace(400, 900, 10))
        for order in (1, 2):
            assert np.allclose(derivative(s, order).values, 0.0, atol=1e-15)

    def test_quadratic_second_derivative(self):
        wl = np.linspace(400, 900, 51)
        a = 3e-6
        s = Speclib(a * wl**2, wl)
        out = derivative(s, order=2)
        assert np.allclose(out.values[0, 1:-1], 2 * a, rtol=1e-7)

    def test_quadratic_exact_on_nonuniform_grid(self, rng):
        wl = np.sort(rng.uniform(400, 900, 30))
        a = 3e-6
        out = derivative(Speclib(a * wl**2, wl), order=2)
        assert np.allclose(out.values[0, 1:-1], 2 * a, rtol=1e-6)

    def test_scaling_commutes(self, rng):
        s = random_speclib(rng, n=3, bands=20)
        lhs = derivative(s.replace(values=4.0 * s.values), 1).values
        rhs = 4.0 * derivative(s, 1).values
        assert np.array_equal(lhs, rhs)

    def test_too_few_bands(self):
        s = Speclib([[1.0, 2.0]], [400, 500])
        with pytest.raises(SelectionError):
            derivative(s, order=2)


class TestSpectralResample:
    def test_constant_spectrum_invariant(self):
        wl = np.arange(400.0, 900.0)
        s = Speclib(np.full((2, wl.size), 0.5), wl)
        target = [SensorBandSpec(500, 30), SensorBandSpec(700, 50)]
        out = spectral_resample(s, target=target)
        assert np.allclose(out.values, 0.5, rtol=0, atol=1e-12)

    def test_sigma_from_fwhm(self):
        assert fwhm_to_sigma(10.0) == pytest.approx(4.24661, abs=1e-5)

    def test_tiny_fwhm_collapses_to_band_value(self, rng):
        wl = np.arange(400.0, 600.0)
        vals = rng.uniform(0, 1, (1, wl.size))
        s = Speclib(vals, wl)
        out = spectral_resample(s, target=[SensorBandSpec(500, 0.1)])
        assert out.values[0, 0] == pytest.approx(vals[0, 100], abs=1e-12)

    def test_affine_invariance(self, rng):
        s = random_speclib(rng, n=3, bands=120, lo=400, hi=900)
        target = [SensorBandSpec(500, 40), SensorBandSpec(800, 60)]
        base = spectral_resample(s, target=target).values
        shifted = spectral_resample(s.replace(values=3.0 * s.values + 0.25), target=target).values
        assert np.allclose(shifted, 3.0 * base + 0.25, rtol=0, atol=1e-12)

    def test_output_within_input_range(self, rng):
        s = random_speclib(rng, n=5, bands=80, lo=400, hi=900)
        out = spectral_resample(s, target=[SensorBandSpec(650, 120)])
        assert np.all(out.values <= s.values.max() + 1e-12)
        assert np.all(out.values >= s.values.min() - 1e-12)

    def test_no_support_errors(self):
        s = Speclib(np.ones((1, 10)), np.linspace(400, 490, 10))
        with pytest.raises(SelectionError, match="no source band"):
            spectral_resample(s, target=[SensorBandSpec(2000, 10)])

    def test_response_curve_mode(self):
        wl = np.arange(400.0, 410.0)
        s = Speclib(np.arange(10.0).reshape(1, -1), wl)
        resp = Speclib(np.array([[0, 1, 1, 0, 0, 0, 0, 0, 0, 0.0],
                                 [0, 0, 0, 0, 0, 0, 1, 1, 1, 0.0]]), wl,
                       si={"center": [401.5, 407.0]})
        out = spectral_resample(s, response=resp)
        assert np.allclose(out.values, [[1.5, 7.0]])
        assert np.array_equal(out.wavelength, [401.5, 407.0])

    def test_response_grid_mismatch(self):
        s = Speclib(np.ones((1, 5)), np.linspace(400, 480, 5))
        resp = Speclib(np.ones((1, 4)), np.linspace(400, 480, 4))
        with pytest.raises(GridError):
            spectral_resample(s, response=resp)
