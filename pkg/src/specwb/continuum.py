"""Continuum lines, band-depth transforms and absorption-feature extraction.

Two continuum constructions are offered. The convex hull is the upper convex
envelope of the spectrum. The segmented upper hull is piecewise linear
through running maxima so that every segment rises left of the global
reflectance maximum and falls right of it; it is not necessarily convex and
resolves neighboring absorption features that a convex hull would merge.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from specwb import _kernels
from specwb.errors import SelectionError
from specwb.speclib import Speclib

__all__ = [
    "ContinuumLine",
    "BandDepthSpeclib",
    "AbsorptionFeature",
    "FeatureProperties",
    "convex_hull",
    "segmented_upper_hull",
    "continuum_lines",
    "continuum_transform",
    "extract_features",
    "feature_properties",
    "FEATURE_EPS",
]

HULL_METHODS = ("convex_hull", "segmented_hull")
_HULL_ALIASES = {"ch": "convex_hull", "sh": "segmented_hull"}
OUT_KINDS = ("raw", "bd", "ratio")

# band depths below this count as zero when delimiting absorption features
FEATURE_EPS = 1e-9


def _canon_method(method: str) -> str:
    method = _HULL_ALIASES.get(method, method)
    if method not in HULL_METHODS:
        raise ValueError(f"unknown hull method {method!r}; use ch, sh, {HULL_METHODS}")
    return method


@dataclass(frozen=True)
class ContinuumLine:
    """Per-spectrum continuum: hull values plus the indices where it touches."""

    wavelength: np.ndarray
    cv: np.ndarray
    fixpoints: np.ndarray
    method: str


class BandDepthSpeclib(Speclib):
    """Speclib of band depths in [0, 1], tagged with its hull method."""

    def __init__(self, *args, method="segmented_hull", source_ids=None, **kwargs):
        super().__init__(*args, **kwargs)
        self.method = method
        self.source_ids = self.ids if source_ids is None else source_ids
        self.n_degenerate = 0


def _check_hull_input(wavelength, values):
    wl = np.asarray(wavelength, dtype=float)
    vals = np.asarray(values, dtype=float)
    if vals.ndim == 1:
        vals = vals.reshape(1, -1)
    if wl.size < 3:
        raise SelectionError("continuum construction needs at least 3 bands")
    if np.any(vals < 0):
        raise ValueError("continuum construction requires nonnegative values")
    return wl, vals


def convex_hull(wavelength, values) -> ContinuumLine:
    """Upper convex hull over (wavelength, value) points of one spectrum."""
    wl, vals = _check_hull_input(wavelength, values)
    cv, fix = _kernels.convex_hull_batch(wl, vals)
    return ContinuumLine(wl, cv[0], np.flatnonzero(fix[0]), "convex_hull")


def segmented_upper_hull(wavelength, values) -> ContinuumLine:
    """Segmented upper hull of one spectrum (rising, then falling segments)."""
    wl, vals = _check_hull_input(wavelength, values)
    cv, fix = _kernels.segmented_hull_batch(wl, vals)
    return ContinuumLine(wl, cv[0], np.flatnonzero(fix[0]), "segmented_hull")


def continuum_lines(s: Speclib, method: str):
    """Hull values and fixpoint masks for every spectrum: (cv, fix) matrices."""
    method = _canon_method(method)
    wl, vals = _check_hull_input(s.wavelength, s.values)
    if method == "convex_hull":
        return _kernels.convex_hull_batch(wl, vals)
    return _kernels.segmented_hull_batch(wl, vals)


def continuum_transform(s: Speclib, method: str = "sh", out: str = "bd"):
    """Transform spectra against their continuum.

    out='raw' returns the continuum values, out='bd' the band depths
    1 - R/CV, out='ratio' the ratio R/CV. Bands where the continuum is zero
    are degenerate; they are set to the no-absorption value (bd 0, ratio 1)
    and counted on the result's `n_degenerate`, with a warning.
    """
    method = _canon_method(method)
    if out not in OUT_KINDS:
        raise ValueError(f"unknown output kind {out!r}; use one of {OUT_KINDS}")
    cv, _ = continuum_lines(s, method)
    if out == "raw":
        return s.replace(values=cv)

    degenerate = cv == 0.0
    n_degenerate = int(np.count_nonzero(degenerate))
    if n_degenerate:
        warnings.warn(
            f"{n_degenerate} band values had a zero continuum; set to the "
            "no-absorption value",
            stacklevel=2,
        )
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(degenerate, 1.0, s.values / np.where(degenerate, 1.0, cv))
    values = (1.0 - ratio) if out == "bd" else ratio
    result = BandDepthSpeclib(
        values,
        grid=s.grid,
        si=s.si,
        mask=s.mask,
        value_unit=s.value_unit,
        ids=s.ids,
        method=method,
        source_ids=s.ids,
    )
    result.n_degenerate = n_degenerate
    return result


# ---------------------------------------------------------------------------
# absorption features
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AbsorptionFeature:
    """Zero-bounded segment of a band-depth spectrum around a requested anchor."""

    spectrum_id: int
    anchor: float
    wavelength: np.ndarray
    band_depth: np.ndarray
    bounds: tuple[float, float] | None
    duplicate_of: int | None = None

    @property
    def empty(self) -> bool:
        return self.wavelength.size == 0


def extract_features(bd: Speclib, anchors) -> list[list[AbsorptionFeature]]:
    """Per spectrum, the zero-bounded band-depth segment containing each anchor.

    Anchors falling on a zero region yield an empty feature; two anchors
    inside the same segment return it twice, the second flagged via
    `duplicate_of`.
    """
    anchors = [float(a) for a in np.atleast_1d(anchors)]
    wl = bd.wavelength
    for a in anchors:
        if not wl[0] <= a <= wl[-1]:
            raise SelectionError(f"anchor {a} nm outside grid [{wl[0]}, {wl[-1]}]")
    out: list[list[AbsorptionFeature]] = []
    for row in range(bd.n_spectra):
        depths = bd.values[row]
        feats: list[AbsorptionFeature] = []
        seen: dict[tuple[int, int], int] = {}
        for a_idx, a in enumerate(anchors):
            k = bd.grid.nearest_band(a)
            if depths[k] <= FEATURE_EPS:
                feats.append(
                    AbsorptionFeature(int(bd.ids[row]), a, np.array([]), np.array([]), None)
                )
                continue
            lo = k
            while lo > 0 and depths[lo - 1] > FEATURE_EPS:
                lo -= 1
            hi = k
            while hi < depths.size - 1 and depths[hi + 1] > FEATURE_EPS:
                hi += 1
            lo_b = lo - 1 if lo > 0 else lo
            hi_b = hi + 1 if hi < depths.size - 1 else hi
            dup = seen.get((lo_b, hi_b))
            if dup is None:
                seen[(lo_b, hi_b)] = a_idx
            sel = slice(lo_b, hi_b + 1)
            feats.append(
                AbsorptionFeature(
                    int(bd.ids[row]),
                    a,
                    np.array(wl[sel]),
                    np.array(depths[sel]),
                    (float(wl[lo_b]), float(wl[hi_b])),
                    duplicate_of=dup,
                )
            )
        out.append(feats)
    return out


@dataclass(frozen=True)
class FeatureProperties:
    """Scalar descriptors of one absorption feature."""

    spectrum_id: int
    anchor: float
    area: float
    max_bd: float
    lambda_max: float
    half_max_width: float
    gauss_rmse_left: float
    gauss_rmse_right: float


_SQRT2LN2 = np.sqrt(2.0 * np.log(2.0))


def feature_properties(feature: AbsorptionFeature) -> FeatureProperties:
    """Area, peak, half-max width and per-flank RMSE against a pinned Gaussian.

    The idealized Gaussian is pinned at the peak, with one sigma per flank
    recovered from that flank's half-maximum crossing.
    """
    if feature.empty:
        raise ValueError("feature is empty")
    wl = feature.wavelength
    depths = feature.band_depth
    area = float(np.sum(depths))
    peak = int(np.argmax(depths))
    max_bd = float(depths[peak])
    lam_max = float(wl[peak])
    if wl.size == 1:
        return FeatureProperties(
            feature.spectrum_id, feature.anchor, area, max_bd, lam_max, 0.0, 0.0, 0.0
        )
    left_cross = _half_max_crossing(wl, depths, peak, max_bd / 2.0, step=-1)
    right_cross = _half_max_crossing(wl, depths, peak, max_bd / 2.0, step=+1)
    width = right_cross - left_cross
    rmse_l = _flank_rmse(wl, depths, peak, max_bd, lam_max, lam_max - left_cross, "left")
    rmse_r = _flank_rmse(wl, depths, peak, max_bd, lam_max, right_cross - lam_max, "right")
    return FeatureProperties(
        feature.spectrum_id,
        feature.anchor,
        area,
        max_bd,
        lam_max,
        float(width),
        rmse_l,
        rmse_r,
    )


def _half_max_crossing(wl, depths, peak, half, step):
    k = peak + step
    while 0 <= k < depths.size:
        if depths[k] <= half:
            lam0, lam1 = wl[k], wl[k - step]
            d0, d1 = depths[k], depths[k - step]
            return float(lam0 + (half - d0) * (lam1 - lam0) / (d1 - d0))
        k += step
    return float(wl[0 if step < 0 else -1])


def _flank_rmse(wl, depths, peak, max_bd, lam_max, half_dist, side):
    sel = wl <= lam_max if side == "left" else wl >= lam_max
    if np.count_nonzero(sel) <= 1:
        return 0.0
    sigma = half_dist / _SQRT2LN2
    if sigma <= 0:
        sigma = np.finfo(float).tiny
    gauss = max_bd * np.exp(-((wl[sel] - lam_max) ** 2) / (2.0 * sigma * sigma))
    return float(np.sqrt(np.mean((gauss - depths[sel]) ** 2)))
