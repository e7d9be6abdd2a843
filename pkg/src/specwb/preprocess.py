"""Noise filtering, spectral derivatives and resampling to coarser sensors."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import make_smoothing_spline

from specwb.errors import GridError, SelectionError
from specwb.speclib import Speclib, WavelengthGrid

__all__ = [
    "FilterSpec",
    "SensorBandSpec",
    "noise_filter",
    "derivative",
    "spectral_resample",
    "fwhm_to_sigma",
]

FILTER_METHODS = ("savitzky_golay", "mean", "lowess", "spline")
_METHOD_ALIASES = {"sgolay": "savitzky_golay"}


def fwhm_to_sigma(fwhm):
    """Standard deviation of a Gaussian response with the given full width at half maximum."""
    return np.asarray(fwhm, dtype=float) / (2.0 * math.sqrt(2.0 * math.log(2.0)))


@dataclass(frozen=True)
class FilterSpec:
    """Noise-filter selection: method plus its tuning parameter.

    `window` is a band count for savitzky_golay, mean and spline;
    `fraction` is the share of bands influencing each lowess fit.
    """

    method: str
    window: int = 7
    poly_order: int = 3
    fraction: float = 0.1

    def __post_init__(self):
        method = _METHOD_ALIASES.get(self.method, self.method)
        object.__setattr__(self, "method", method)
        if method not in FILTER_METHODS:
            raise ValueError(f"unknown filter method {self.method!r}; use one of {FILTER_METHODS}")
        if method in ("savitzky_golay", "mean", "spline"):
            if self.window < 3 or self.window % 2 == 0:
                raise ValueError(f"window must be odd and >= 3, got {self.window}")
        if method == "savitzky_golay":
            if not 0 <= self.poly_order < self.window:
                raise ValueError(
                    f"poly_order must satisfy 0 <= order < window, got {self.poly_order}"
                )
        if method == "lowess" and not 0.0 < self.fraction <= 1.0:
            raise ValueError(f"fraction must lie in (0, 1], got {self.fraction}")


@dataclass(frozen=True)
class SensorBandSpec:
    """One target band of a coarser sensor: center and fwhm, both nm."""

    center: float
    fwhm: float

    def __post_init__(self):
        if not self.fwhm > 0:
            raise ValueError(f"fwhm must be positive, got {self.fwhm}")


# ---------------------------------------------------------------------------
# noise filtering
# ---------------------------------------------------------------------------

def noise_filter(s: Speclib, spec: FilterSpec) -> Speclib:
    """Smooth every spectrum; the wavelength grid is unchanged.

    All four filters are linear operators of the values whose weights depend
    only on the wavelength grid, so they fix constants and commute with
    linear combinations.
    """
    if spec.method in ("savitzky_golay", "mean", "spline") and spec.window > s.n_bands:
        raise SelectionError(
            f"window {spec.window} exceeds the {s.n_bands}-band grid"
        )
    if spec.method == "savitzky_golay":
        out = _sgolay(s.wavelength, s.values, spec.window, spec.poly_order)
    elif spec.method == "mean":
        out = _mean_filter(s.values, spec.window)
    elif spec.method == "lowess":
        out = _lowess(s.wavelength, s.values, spec.fraction)
    else:
        out = _spline_filter(s.wavelength, s.values, spec.window)
    return s.replace(values=out)


def _sgolay(wl, values, window, order):
    # local least-squares polynomial in wavelength, evaluated at the band
    # center; edge bands reuse the innermost full window (exactly reproduces
    # polynomials of degree <= order everywhere, uniform grid or not)
    n = wl.size
    out = np.empty_like(values)
    e0 = np.zeros(order + 1)
    e0[0] = 1.0
    for k in range(n):
        lo = min(max(k - window // 2, 0), n - window)
        dx = wl[lo : lo + window] - wl[k]
        scale = max(float(np.max(np.abs(dx))), 1.0)
        design = np.vander(dx / scale, order + 1, increasing=True)
        coef = np.linalg.solve(design.T @ design, e0)
        w = design @ coef
        out[:, k] = values[:, lo : lo + window] @ w
    return out


def _mean_filter(values, window):
    half = window // 2
    padded = np.pad(values, ((0, 0), (half, half)), mode="symmetric")
    sw = np.lib.stride_tricks.sliding_window_view(padded, window, axis=1)
    return sw.mean(axis=-1)


def _lowess(wl, values, fraction):
    # locally weighted linear regression with tricube weights, one pass
    n = wl.size
    q = max(2, min(n, math.ceil(fraction * n)))
    out = np.empty_like(values)
    for k in range(n):
        lo_best, d_best = 0, np.inf
        for lo in range(max(0, k - q + 1), min(k, n - q) + 1):
            d = max(wl[k] - wl[lo], wl[lo + q - 1] - wl[k])
            if d < d_best:
                lo_best, d_best = lo, d
        sel = slice(lo_best, lo_best + q)
        dx = wl[sel] - wl[k]
        dmax = float(np.max(np.abs(dx)))
        if dmax == 0.0:
            out[:, k] = values[:, k]
            continue
        u = np.abs(dx) / dmax
        w = (1.0 - u**3) ** 3
        s0 = float(np.sum(w))
        s1 = float(np.sum(w * dx))
        s2 = float(np.sum(w * dx * dx))
        t0 = values[:, sel] @ w
        t1 = values[:, sel] @ (w * dx)
        det = s0 * s2 - s1 * s1
        if det > 1e-12 * max(s0 * s2, 1e-300):
            out[:, k] = (s2 * t0 - s1 * t1) / det
        else:
            out[:, k] = t0 / s0
    return out


def _spline_filter(wl, values, window):
    # smoothing cubic spline; the penalty is derived from the filter length by
    # equating the spline's asymptotic kernel bandwidth with half the window
    # span (approximate by construction)
    dbar = float(np.mean(np.diff(wl)))
    bandwidth = window * dbar / 2.0
    lam = bandwidth**4 / dbar
    out = np.empty_like(values)
    for i in range(values.shape[0]):
        out[i] = make_smoothing_spline(wl, values[i], lam=lam)(wl)
    return out


# ---------------------------------------------------------------------------
# derivatives
# ---------------------------------------------------------------------------

def derivative(s: Speclib, order: int = 1) -> Speclib:
    """First or second derivative against wavelength (units value per nm^order).

    Interior bands use three-point differences valid on non-uniform grids;
    edge bands fall back to the one-sided stencil.
    """
    if order not in (1, 2):
        raise ValueError(f"derivative order must be 1 or 2, got {order}")
    if s.n_bands < order + 1:
        raise SelectionError(f"need at least {order + 1} bands for order {order}")
    wl = s.wavelength
    v = s.values
    out = np.empty_like(v)
    if order == 1:
        if s.n_bands > 2:
            h1 = wl[1:-1] - wl[:-2]
            h2 = wl[2:] - wl[1:-1]
            out[:, 1:-1] = (
                v[:, :-2] * (-h2 / (h1 * (h1 + h2)))
                + v[:, 1:-1] * ((h2 - h1) / (h1 * h2))
                + v[:, 2:] * (h1 / (h2 * (h1 + h2)))
            )
        out[:, 0] = (v[:, 1] - v[:, 0]) / (wl[1] - wl[0])
        out[:, -1] = (v[:, -1] - v[:, -2]) / (wl[-1] - wl[-2])
    else:
        h1 = wl[1:-1] - wl[:-2]
        h2 = wl[2:] - wl[1:-1]
        out[:, 1:-1] = (
            v[:, :-2] * (2.0 / (h1 * (h1 + h2)))
            - v[:, 1:-1] * (2.0 / (h1 * h2))
            + v[:, 2:] * (2.0 / (h2 * (h1 + h2)))
        )
        out[:, 0] = out[:, 1]
        out[:, -1] = out[:, -2]
    return s.replace(values=out)


# ---------------------------------------------------------------------------
# spectral resampling
# ---------------------------------------------------------------------------

def spectral_resample(
    s: Speclib,
    target: list[SensorBandSpec] | None = None,
    response: Speclib | None = None,
) -> Speclib:
    """Integrate spectra to a coarser sensor.

    Either `target` gives the coarse bands (Gaussian responses from their
    fwhm), or `response` supplies explicit response curves, one row per target
    band, sampled on the same wavelength grid as `s`.
    """
    if (target is None) == (response is None):
        raise ValueError("give exactly one of target bands or response curves")
    src = s.wavelength
    if target is not None:
        centers = np.array([t.center for t in target], dtype=float)
        fwhm = np.array([t.fwhm for t in target], dtype=float)
        sigma = fwhm_to_sigma(fwhm)
        weights = np.empty((centers.size, src.size))
        for k, (c, sg) in enumerate(zip(centers, sigma)):
            if not np.any(np.abs(src - c) <= 2.0 * sg):
                raise SelectionError(
                    f"target band at {c} nm (fwhm {fwhm[k]}) has no source band "
                    "within two sigma"
                )
            weights[k] = np.exp(-((src - c) ** 2) / (2.0 * sg * sg))
    else:
        if not np.array_equal(response.wavelength, src):
            raise GridError(
                "response curves must be sampled on the source wavelength grid"
            )
        weights = np.array(response.values)
        if np.any(weights < 0):
            raise ValueError("response weights must be nonnegative")
        if "center" in response.si and response.si.column("center").kind == "numeric":
            centers = response.si.values("center").astype(float)
        else:
            with np.errstate(invalid="ignore"):
                centers = (weights @ src) / weights.sum(axis=1)
        if "fwhm" in response.si and response.si.column("fwhm").kind == "numeric":
            fwhm = response.si.values("fwhm").astype(float)
        else:
            fwhm = _gaussian_equivalent_fwhm(src, weights, centers)
        order = np.argsort(centers)
        centers, fwhm, weights = centers[order], fwhm[order], weights[order]

    rowsum = weights.sum(axis=1)
    for k in np.flatnonzero(rowsum == 0.0):
        if target is None:
            raise SelectionError(f"response curve {k} has no support on the grid")
        weights[k, np.argmin(np.abs(src - centers[k]))] = 1.0
    rowsum = weights.sum(axis=1)
    weights = weights / rowsum[:, None]
    out = s.values @ weights.T
    grid = WavelengthGrid(centers, fwhm)
    return s.replace(values=out, grid=grid)


def _gaussian_equivalent_fwhm(src, weights, centers):
    total = weights.sum(axis=1)
    var = (weights * (src[None, :] - centers[:, None]) ** 2).sum(axis=1) / np.where(
        total > 0, total, 1.0
    )
    fwhm = np.sqrt(8.0 * math.log(2.0) * var)
    spacing = float(np.min(np.diff(src))) if src.size > 1 else 1.0
    return np.maximum(fwhm, spacing)
