"""Per-pair generalized linear model fits and the normal reference distribution.

The binomial family is fit by iteratively reweighted least squares with a
logit link (at most 50 iterations, stop when the deviance changes by less
than 1e-10); the gaussian family is ordinary least squares in closed form.
Test statistics are Wald z values judged against the standard normal.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.special import erfc

from specwb import _kernels

__all__ = [
    "normal_cdf",
    "wald_p_value",
    "fit_binomial_pairs",
    "fit_gaussian_pairs",
    "GLM_MAX_ITER",
    "GLM_DEVIANCE_TOL",
    "GLM_BETA_CAP",
]

GLM_MAX_ITER = 50
GLM_DEVIANCE_TOL = 1e-10
# |coefficient| beyond this on the logit scale indicates (quasi-)separation
GLM_BETA_CAP = 30.0

_SQRT2 = math.sqrt(2.0)
_TINY = np.finfo(float).tiny


def normal_cdf(z):
    """Standard normal CDF via the complementary error function."""
    z = np.asarray(z, dtype=float)
    out = 0.5 * erfc(-z / _SQRT2)
    return float(out) if out.ndim == 0 else out


def wald_p_value(z):
    """Two-sided p-value of a Wald z statistic against the standard normal."""
    z = np.asarray(z, dtype=float)
    out = np.maximum(erfc(np.abs(z) / _SQRT2), _TINY)
    return float(out) if out.ndim == 0 else out


def _package(beta0, beta1, se0, se1, deviance, iterations, status):
    converged = status == _kernels.STATUS_OK
    with np.errstate(invalid="ignore", divide="ignore"):
        z = np.where(converged, beta1 / se1, np.nan)
    p = np.where(converged, wald_p_value(np.where(converged, z, 0.0)), np.nan)
    return {
        "beta0": beta0,
        "beta1": beta1,
        "se0": se0,
        "se1": se1,
        "z": z,
        "p": p,
        "deviance": deviance,
        "iterations": iterations,
        "status": status,
        "converged": converged,
    }


def fit_binomial_pairs(x, y, n_threads: int = 1):
    """Logistic fits y ~ b0 + b1*x_row for each row of `x` (y binary 0/1).

    Rows are independent; with n_threads > 1 they are fitted by a thread pool
    writing into disjoint preallocated slots, so results do not depend on the
    worker count. Separated or non-convergent rows carry NaN statistics and
    converged=False.
    """
    x = np.ascontiguousarray(x, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError("binomial response must be binary 0/1")
    npairs = x.shape[0]
    if n_threads <= 1 or npairs < 2 * n_threads:
        res = _kernels.logistic_irls_batch(x, y, GLM_MAX_ITER, GLM_DEVIANCE_TOL, GLM_BETA_CAP)
        return _package(*res)

    outs = [np.full(npairs, np.nan) for _ in range(5)]
    iterations = np.zeros(npairs, dtype=np.int32)
    status = np.zeros(npairs, dtype=np.int8)
    bounds = np.linspace(0, npairs, n_threads + 1).astype(int)

    def run(lo, hi):
        res = _kernels.logistic_irls_batch(
            x[lo:hi], y, GLM_MAX_ITER, GLM_DEVIANCE_TOL, GLM_BETA_CAP
        )
        for dst, src in zip(outs, res[:5]):
            dst[lo:hi] = src
        iterations[lo:hi] = res[5]
        status[lo:hi] = res[6]

    with ThreadPoolExecutor(max_workers=n_threads) as pool:
        futures = [
            pool.submit(run, lo, hi)
            for lo, hi in zip(bounds[:-1], bounds[1:])
            if hi > lo
        ]
        for f in futures:
            f.result()
    return _package(*outs, iterations, status)


def fit_gaussian_pairs(x, y):
    """Closed-form least-squares fits y ~ b0 + b1*x_row for each row of `x`."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = np.isfinite(x)
    n = ok.sum(axis=1).astype(float)
    xm = np.where(ok, x, 0.0)
    ym = np.where(ok, y[None, :], 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_x = xm.sum(axis=1) / n
        mean_y = ym.sum(axis=1) / n
        dx = np.where(ok, x - mean_x[:, None], 0.0)
        dy = np.where(ok, y[None, :] - mean_y[:, None], 0.0)
        sxx = (dx * dx).sum(axis=1)
        sxy = (dx * dy).sum(axis=1)
        beta1 = sxy / sxx
        beta0 = mean_y - beta1 * mean_x
        resid = np.where(ok, y[None, :] - beta0[:, None] - beta1[:, None] * x, 0.0)
        rss = (resid * resid).sum(axis=1)
        dof = n - 2.0
        sigma2 = np.where(dof > 0, rss / np.where(dof > 0, dof, 1.0), np.nan)
        se1 = np.sqrt(sigma2 / sxx)
        se0 = np.sqrt(sigma2 * (1.0 / n + mean_x**2 / sxx))
    bad = ~np.isfinite(beta1) | ~np.isfinite(se1) | (sxx <= 0) | (dof <= 0) | (sigma2 == 0)
    status = np.where(bad, _kernels.STATUS_SINGULAR, _kernels.STATUS_OK).astype(np.int8)
    for arr in (beta0, beta1, se0, se1):
        arr[bad] = np.nan
    iterations = np.ones(x.shape[0], dtype=np.int32)
    return _package(beta0, beta1, se0, se1, rss, iterations, status)
