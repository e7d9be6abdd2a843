"""Linear spectral unmixing: least-squares endmember abundances per spectrum."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from specwb import _kernels
from specwb.errors import FitError, GridError, SelectionError
from specwb.speclib import Speclib

__all__ = ["AbundanceResult", "unmix", "CONSTRAINT_MODES", "SUM_ROW_WEIGHT"]

CONSTRAINT_MODES = ("none", "sum_to_one", "nonneg", "full")

# weight of the appended sum-to-one row when combined with nonnegativity
SUM_ROW_WEIGHT = 1e6


@dataclass(frozen=True)
class AbundanceResult:
    """Per-sample endmember weights and the residual RMSE of the reconstruction."""

    abundances: np.ndarray  # (samples, endmembers)
    rmse: np.ndarray
    endmember_names: list[str]
    constraints: str
    ids: np.ndarray


def endmember_names(endmembers: Speclib) -> list[str]:
    if "name" in endmembers.si:
        return [str(v) for v in endmembers.si.values("name")]
    return [f"em{k}" for k in range(endmembers.n_spectra)]


def unmix(s: Speclib, endmembers: Speclib, constraints: str = "full") -> AbundanceResult:
    """Decompose each spectrum into endmember abundances by least squares.

    Constraint modes: none (plain least squares), sum_to_one (abundances sum
    to one, solved by eliminating one variable), nonneg (active-set
    nonnegative least squares), full (nonnegativity plus the sum row appended
    with a large weight, then polished against the exact sum constraint on
    the surviving endmembers).
    """
    if constraints not in CONSTRAINT_MODES:
        raise ValueError(f"unknown constraint mode {constraints!r}; use {CONSTRAINT_MODES}")
    if not np.array_equal(s.wavelength, endmembers.wavelength):
        raise GridError(
            "endmember grid differs from the target grid; resample endmembers first"
        )
    e = endmembers.values  # (m, bands)
    m, b = e.shape
    if m > b:
        raise SelectionError(f"{m} endmembers exceed the {b}-band grid")
    design = e.T  # (bands, m)
    r = s.values  # (n, bands)

    if constraints == "none":
        if np.linalg.matrix_rank(e) < m:
            raise FitError("endmember matrix is rank deficient; drop or merge endmembers")
        a = np.linalg.lstsq(design, r.T, rcond=None)[0].T
    elif constraints == "sum_to_one":
        a = _sum_to_one(design, r)
    elif constraints == "nonneg":
        a = _kernels.nnls_batch(design, r)
    else:
        a = _full_constrained(design, r)

    resid = r - a @ e
    rmse = np.sqrt(np.mean(resid * resid, axis=1))
    return AbundanceResult(a, rmse, endmember_names(endmembers), constraints, np.array(s.ids))


def _sum_to_one(design, r):
    m = design.shape[1]
    n = r.shape[0]
    if m == 1:
        return np.ones((n, 1))
    # eliminate the last abundance via a_m = 1 - sum(others)
    reduced = design[:, :-1] - design[:, -1:]
    target = r - design[:, -1]
    z = np.linalg.lstsq(reduced, target.T, rcond=None)[0].T
    return np.column_stack([z, 1.0 - z.sum(axis=1)])


def _full_constrained(design, r):
    b, m = design.shape
    n = r.shape[0]
    augmented = np.vstack([design, np.full((1, m), SUM_ROW_WEIGHT)])
    rhs = np.column_stack([r, np.full(n, SUM_ROW_WEIGHT)])
    rough = _kernels.nnls_batch(augmented, rhs)
    # the weighted sum row fixes the active set; re-solving with the exact
    # constraint on the surviving endmembers removes its O(1e-12) conditioning
    # penalty from the reported abundances
    out = np.array(rough)
    for k in range(n):
        passive = np.flatnonzero(rough[k] > 0)
        if passive.size == 0:
            continue
        if passive.size == 1:
            polished = np.array([1.0])
        else:
            sub = design[:, passive]
            reduced = sub[:, :-1] - sub[:, -1:]
            target = r[k] - sub[:, -1]
            z = np.linalg.lstsq(reduced, target, rcond=None)[0]
            polished = np.concatenate([z, [1.0 - z.sum()]])
        if polished.min() >= -1e-12:
            out[k] = 0.0
            out[k, passive] = polished
    return out
