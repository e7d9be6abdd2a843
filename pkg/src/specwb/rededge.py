"""Red-edge parameters: the wavelength of the sharp reflectance rise of
vegetation between roughly 680 and 750 nm, by three established methods."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from specwb.errors import FitError, SelectionError
from specwb.preprocess import derivative
from specwb.speclib import Speclib

__all__ = ["RedEdgeResult", "red_edge", "RED_EDGE_METHODS"]

RED_EDGE_METHODS = ("gaussian_fit", "linear_extrapolation", "linear_interpolation")

_FIT_WINDOW = (660.0, 800.0)
_LEFT_FLANK = (680.0, 700.0)
_RIGHT_FLANK = (725.0, 760.0)
_PLAUSIBLE = (680.0, 760.0)

_MAX_ITER = 200
_STEP_TOL = 1e-10


@dataclass(frozen=True)
class RedEdgeResult:
    method: str
    reip: float
    auxiliary: dict = field(default_factory=dict)


def red_edge(s: Speclib, method: str) -> list[RedEdgeResult]:
    """Red-edge inflection point per spectrum.

    gaussian_fit: least-squares inverted Gaussian on 660-800 nm, position
    lambda0 + sigma. linear_extrapolation: intersection of straight lines
    fitted to the first derivative on 680-700 and 725-760 nm.
    linear_interpolation: the four-band interpolation
    700 + 40*((R_edge - R700)/(R740 - R700)) with R_edge = (R670 + R780)/2.
    """
    if method not in RED_EDGE_METHODS:
        raise ValueError(f"unknown red-edge method {method!r}; use {RED_EDGE_METHODS}")
    wl = s.wavelength
    if wl[0] > _FIT_WINDOW[0] or wl[-1] < _FIT_WINDOW[1]:
        raise SelectionError(
            f"missing coverage: red edge needs {_FIT_WINDOW[0]:g}-{_FIT_WINDOW[1]:g} nm, "
            f"grid spans {wl[0]:g}-{wl[-1]:g} nm"
        )
    if method == "linear_interpolation":
        results = _by_interpolation(s)
    elif method == "linear_extrapolation":
        results = _by_extrapolation(s)
    else:
        results = _by_gaussian(s)
    n_odd = sum(1 for r in results if not _PLAUSIBLE[0] <= r.reip <= _PLAUSIBLE[1])
    if n_odd:
        warnings.warn(
            f"{n_odd} red-edge position(s) outside the plausible "
            f"{_PLAUSIBLE[0]:g}-{_PLAUSIBLE[1]:g} nm range",
            stacklevel=2,
        )
    return results


def _band(s: Speclib, wavelength: float) -> int:
    return s.grid.nearest_band(wavelength)


def _by_interpolation(s: Speclib) -> list[RedEdgeResult]:
    i670, i700, i740, i780 = (_band(s, w) for w in (670.0, 700.0, 740.0, 780.0))
    out = []
    for row in s.values:
        r_edge = (row[i670] + row[i780]) / 2.0
        denom = row[i740] - row[i700]
        if denom == 0.0:
            raise FitError("no red edge: R740 equals R700")
        reip = 700.0 + 40.0 * (r_edge - row[i700]) / denom
        out.append(RedEdgeResult("linear_interpolation", float(reip), {"r_edge": float(r_edge)}))
    return out


def _by_extrapolation(s: Speclib) -> list[RedEdgeResult]:
    d1 = derivative(s, order=1)
    wl = s.wavelength
    left = (wl >= _LEFT_FLANK[0]) & (wl <= _LEFT_FLANK[1])
    right = (wl >= _RIGHT_FLANK[0]) & (wl <= _RIGHT_FLANK[1])
    if np.count_nonzero(left) < 2 or np.count_nonzero(right) < 2:
        raise SelectionError("missing coverage: derivative flanks need two bands each")
    out = []
    for drow in d1.values:
        b1, a1 = np.polyfit(wl[left], drow[left], 1)
        b2, a2 = np.polyfit(wl[right], drow[right], 1)
        if b1 == b2:
            raise FitError("no red edge: derivative flanks are parallel")
        reip = (a2 - a1) / (b1 - b2)
        out.append(
            RedEdgeResult(
                "linear_extrapolation",
                float(reip),
                {"left_slope": float(b1), "right_slope": float(b2)},
            )
        )
    return out


def _by_gaussian(s: Speclib) -> list[RedEdgeResult]:
    wl = s.wavelength
    sel = (wl >= _FIT_WINDOW[0]) & (wl <= _FIT_WINDOW[1])
    x = wl[sel]
    d1 = derivative(s, order=1)
    i670 = _band(s, 670.0)
    out = []
    for row, drow in zip(s.values, d1.values):
        y = row[sel]
        if np.max(y) == np.min(y):
            raise FitError("no red edge: spectrum is flat over the fit window")
        theta = np.array(
            [np.max(y), row[i670], x[int(np.argmax(drow[sel]))], 30.0]
        )
        theta, converged = _gauss_newton(x, y, theta)
        if not converged:
            raise FitError(f"red-edge fit did not converge within {_MAX_ITER} iterations")
        rs, r0, lam0, sigma = theta
        out.append(
            RedEdgeResult(
                "gaussian_fit",
                float(lam0 + abs(sigma)),
                {"rs": float(rs), "r0": float(r0), "lambda0": float(lam0), "sigma": float(abs(sigma))},
            )
        )
    return out


def _gauss_model(x, theta):
    rs, r0, lam0, sigma = theta
    g = np.exp(-((x - lam0) ** 2) / (2.0 * sigma * sigma))
    return rs - (rs - r0) * g, g


def _gauss_newton(x, y, theta):
    model, _ = _gauss_model(x, theta)
    sse = float(np.sum((model - y) ** 2))
    for _ in range(_MAX_ITER):
        rs, r0, lam0, sigma = theta
        model, g = _gauss_model(x, theta)
        resid = model - y
        dx = x - lam0
        jac = np.column_stack(
            [
                1.0 - g,
                g,
                -(rs - r0) * g * dx / (sigma * sigma),
                -(rs - r0) * g * dx * dx / (sigma**3),
            ]
        )
        step = np.linalg.lstsq(jac, -resid, rcond=None)[0]
        t = 1.0
        while t > 1e-12:
            cand = theta + t * step
            cand[3] = max(abs(cand[3]), 1e-8)
            new_sse = float(np.sum((_gauss_model(x, cand)[0] - y) ** 2))
            if new_sse <= sse:
                break
            t /= 2.0
        else:
            return theta, bool(np.max(np.abs(step)) < _STEP_TOL)
        theta = theta + t * step
        theta[3] = max(abs(theta[3]), 1e-8)
        sse = new_sse
        if np.max(np.abs(t * step)) < _STEP_TOL:
            return theta, True
    return theta, False
