"""All-pairs normalized ratio indices, per-pair model screening and ML export.

For bands i > j the index (R_i - R_j)/(R_i + R_j) is computed per sample and
stored as a flat lower triangle (pair (i, j) lives at slot i*(i-1)/2 + j).
Each pair can then be screened as the single predictor of a binomial or
gaussian model, the resulting statistic grids exported as correlograms, and
the pairs flattened into a predictor matrix for external ML tools.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from specwb.errors import SelectionError
from specwb.glm import fit_binomial_pairs, fit_gaussian_pairs
from specwb.speclib import SITable, Speclib, WavelengthGrid

__all__ = [
    "NriCube",
    "nri_all_pairs",
    "GlmStatsGrid",
    "glm_nri",
    "CorrelogramSummary",
    "export_correlogram",
    "MlDataset",
    "MlBuildReport",
    "build_ml_dataset",
    "correlation_cutoff_filter",
    "export_ml_matrix",
    "write_ml_csv",
]

GLM_FAMILIES = ("binomial", "gaussian")
CORRELOGRAM_STATISTICS = ("coefficient", "z.value", "p.value")


def pair_index(i: int, j: int) -> int:
    """Flat slot of band pair (i, j), i > j."""
    if not i > j >= 0:
        raise IndexError(f"pair ({i}, {j}) requires i > j >= 0")
    return i * (i - 1) // 2 + j


@dataclass(frozen=True)
class NriCube:
    """Lower-triangular normalized-ratio tensor with its source metadata."""

    values: np.ndarray  # (npairs, nsamples)
    grid: WavelengthGrid
    si: SITable
    ids: np.ndarray
    nan_counts: np.ndarray  # per pair, zero-sum denominators

    @property
    def n_pairs(self) -> int:
        return self.values.shape[0]

    @property
    def n_samples(self) -> int:
        return self.values.shape[1]

    @property
    def band_pairs(self) -> tuple[np.ndarray, np.ndarray]:
        return np.tril_indices(self.grid.n_bands, k=-1)

    def pair_wavelengths(self) -> tuple[np.ndarray, np.ndarray]:
        ii, jj = self.band_pairs
        return self.grid.centers[ii], self.grid.centers[jj]

    def pair_names(self) -> list[str]:
        wi, wj = self.pair_wavelengths()
        return [f"nri_{a:g}_{b:g}" for a, b in zip(wi, wj)]

    def pair_values(self, i: int, j: int) -> np.ndarray:
        return self.values[pair_index(i, j)]


def nri_all_pairs(s: Speclib) -> NriCube:
    """Normalized ratio index for every band pair i > j, per sample.

    Zero-sum denominators yield NaN; their per-pair counts are kept on the
    cube and reported once as a warning.
    """
    if s.n_bands < 2:
        raise SelectionError("need at least 2 bands for ratio indices")
    ii, jj = np.tril_indices(s.n_bands, k=-1)
    ri = s.values[:, ii]
    rj = s.values[:, jj]
    den = ri + rj
    zero = den == 0.0
    with np.errstate(invalid="ignore", divide="ignore"):
        vals = np.where(zero, np.nan, (ri - rj) / np.where(zero, 1.0, den))
    nan_counts = zero.sum(axis=0).astype(np.int64)
    total = int(nan_counts.sum())
    if total:
        warnings.warn(f"{total} zero-sum denominator(s) produced NaN indices", stacklevel=2)
    return NriCube(
        np.ascontiguousarray(vals.T), s.grid, s.si, np.array(s.ids), nan_counts
    )


# ---------------------------------------------------------------------------
# per-pair models
# ---------------------------------------------------------------------------

@dataclass
class GlmStatsGrid:
    """Per-pair model statistics over the lower band-pair triangle."""

    wl_i: np.ndarray
    wl_j: np.ndarray
    coefficient: np.ndarray
    intercept: np.ndarray
    se_coefficient: np.ndarray
    se_intercept: np.ndarray
    z_value: np.ndarray
    p_value: np.ndarray
    deviance: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray
    family: str
    response_name: str
    response_levels: tuple | None = None

    def statistic(self, name: str) -> np.ndarray:
        table = {
            "coefficient": self.coefficient,
            "z.value": self.z_value,
            "p.value": self.p_value,
        }
        if name not in table:
            raise SelectionError(
                f"unknown statistic {name!r}; valid names: {', '.join(CORRELOGRAM_STATISTICS)}"
            )
        return table[name]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["wl_i", "wl_j", "coefficient", "intercept", "se_coefficient",
                 "se_intercept", "z.value", "p.value", "deviance", "iterations",
                 "converged"]
            )
            for k in range(self.wl_i.size):
                writer.writerow(
                    [f"{self.wl_i[k]:.17g}", f"{self.wl_j[k]:.17g}"]
                    + [f"{v[k]:.17g}" for v in (
                        self.coefficient, self.intercept, self.se_coefficient,
                        self.se_intercept, self.z_value, self.p_value, self.deviance,
                    )]
                    + [str(int(self.iterations[k])), str(int(self.converged[k]))]
                )

    @classmethod
    def read_csv(cls, path, family="binomial", response_name="") -> "GlmStatsGrid":
        data = np.genfromtxt(path, delimiter=",", names=True, deletechars="")
        if data.ndim == 0:
            data = data.reshape(1)
        return cls(
            wl_i=data["wl_i"],
            wl_j=data["wl_j"],
            coefficient=data["coefficient"],
            intercept=data["intercept"],
            se_coefficient=data["se_coefficient"],
            se_intercept=data["se_intercept"],
            z_value=data["z.value"],
            p_value=data["p.value"],
            deviance=data["deviance"],
            iterations=data["iterations"].astype(np.int32),
            converged=data["converged"].astype(bool),
            family=family,
            response_name=response_name,
        )


def _coerce_binary(col) -> tuple[np.ndarray, tuple | None]:
    if col.kind == "numeric":
        vals = col.values.astype(float)
        if not np.all(np.isin(vals, (0.0, 1.0))):
            raise ValueError("binomial response must contain only 0 and 1")
        return vals, None
    levels = sorted(set(col.values.tolist()))
    if len(levels) != 2:
        raise ValueError(f"binomial response needs exactly 2 levels, got {levels}")
    return np.array([float(levels.index(v)) for v in col.values]), tuple(levels)


def glm_nri(
    cube: NriCube, response: str, family: str = "binomial", n_threads: int = 1
) -> GlmStatsGrid:
    """Fit response ~ intercept + coefficient * NRI for every band pair.

    Samples whose index value is NaN are excluded pair by pair. Perfectly
    separated or otherwise non-convergent pairs carry NaN statistics with
    converged False.
    """
    if family not in GLM_FAMILIES:
        raise ValueError(f"unknown family {family!r}; use one of {GLM_FAMILIES}")
    if cube.n_samples < 3:
        raise SelectionError("need at least 3 samples to fit per-pair models")
    col = cube.si.column(response)
    levels = None
    if family == "binomial":
        y, levels = _coerce_binary(col)
        fit = fit_binomial_pairs(cube.values, y, n_threads=n_threads)
    else:
        if col.kind != "numeric":
            raise ValueError("gaussian response must be numeric")
        fit = fit_gaussian_pairs(cube.values, col.values.astype(float))
    wi, wj = cube.pair_wavelengths()
    return GlmStatsGrid(
        wl_i=wi,
        wl_j=wj,
        coefficient=fit["beta1"],
        intercept=fit["beta0"],
        se_coefficient=fit["se1"],
        se_intercept=fit["se0"],
        z_value=fit["z"],
        p_value=fit["p"],
        deviance=fit["deviance"],
        iterations=fit["iterations"],
        converged=fit["converged"],
        family=family,
        response_name=response,
        response_levels=levels,
    )


# ---------------------------------------------------------------------------
# correlograms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CorrelogramSummary:
    statistic: str
    best: tuple[float, float, float]  # wl_i, wl_j, p-value
    worst: tuple[float, float, float]
    value_min: float
    value_max: float
    n_finite: int


def _ramp(t: float) -> tuple[int, int, int]:
    """Diverging blue-white-red color ramp over t in [0, 1]."""
    lo, mid, hi = (38, 84, 178), (247, 247, 247), (178, 24, 43)
    t = min(max(t, 0.0), 1.0)
    if t <= 0.5:
        a, b, u = lo, mid, 2.0 * t
    else:
        a, b, u = mid, hi, 2.0 * t - 1.0
    return tuple(round(a[c] + (b[c] - a[c]) * u) for c in range(3))


_NAN_COLOR = (180, 180, 180)
_BG_COLOR = (255, 255, 255)


def export_correlogram(
    stats: GlmStatsGrid,
    statistic: str,
    log_scale: bool = False,
    csv_path=None,
    pixmap_path=None,
) -> CorrelogramSummary:
    """Write the per-pair statistic as a CSV triangle and a pixmap heatmap.

    The CSV holds raw values; log_scale applies a log10 transform to the
    heatmap colors only (the usual choice for p-values). Pairs are ranked by
    p-value and the best (minimum p) and worst (maximum p) pairs reported.
    """
    values = stats.statistic(statistic)
    plotted = values.astype(float).copy()
    if log_scale:
        with np.errstate(invalid="ignore", divide="ignore"):
            plotted = np.log10(np.where(plotted > 0, plotted, np.nan))
    finite = np.isfinite(plotted)
    if not np.any(finite):
        raise SelectionError(f"all values of {statistic} are NaN")
    vmin = float(np.min(plotted[finite]))
    vmax = float(np.max(plotted[finite]))
    span = vmax - vmin if vmax > vmin else 1.0

    if csv_path is not None:
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["wl_i", "wl_j", "value"])
            for k in range(values.size):
                writer.writerow(
                    [f"{stats.wl_i[k]:.17g}", f"{stats.wl_j[k]:.17g}", f"{values[k]:.17g}"]
                )

    if pixmap_path is not None:
        wl = np.unique(np.concatenate([stats.wl_i, stats.wl_j]))
        lookup = {w: k for k, w in enumerate(wl)}
        b = wl.size
        img = np.full((b, b, 3), _BG_COLOR, dtype=np.uint8)
        for k in range(values.size):
            i, j = lookup[stats.wl_i[k]], lookup[stats.wl_j[k]]
            if finite[k]:
                img[i, j] = _ramp((plotted[k] - vmin) / span)
            else:
                img[i, j] = _NAN_COLOR
        with open(pixmap_path, "wb") as fh:
            fh.write(f"P6\n{b} {b}\n255\n".encode("ascii"))
            fh.write(img.tobytes())

    p = stats.p_value
    p_ok = np.isfinite(p)
    if np.any(p_ok):
        kb = int(np.flatnonzero(p_ok)[np.argmin(p[p_ok])])
        kw = int(np.flatnonzero(p_ok)[np.argmax(p[p_ok])])
        best = (float(stats.wl_i[kb]), float(stats.wl_j[kb]), float(p[kb]))
        worst = (float(stats.wl_i[kw]), float(stats.wl_j[kw]), float(p[kw]))
    else:
        best = worst = (np.nan, np.nan, np.nan)
    return CorrelogramSummary(statistic, best, worst, vmin, vmax, int(finite.sum()))


# ---------------------------------------------------------------------------
# predictor matrices for external ML
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MlDataset:
    """Response column plus named predictor matrix, one row per sample."""

    response_name: str
    response: np.ndarray
    predictor_names: list[str]
    predictors: np.ndarray


@dataclass(frozen=True)
class MlBuildReport:
    dropped_nan_pairs: int
    dropped_constant: tuple[str, ...]


def build_ml_dataset(
    cube: NriCube, response: str, extra_predictors=()
) -> tuple[MlDataset, MlBuildReport]:
    """Flatten the NRI pairs (plus selected SI columns) into a predictor matrix.

    Pairs containing NaN are dropped and counted; categorical SI predictors
    are one-hot encoded; constant predictor columns are removed.
    """
    resp = cube.si.column(response)
    names: list[str] = []
    columns: list[np.ndarray] = []
    pair_names = cube.pair_names()
    finite = np.isfinite(cube.values).all(axis=1)
    dropped_nan = int(np.count_nonzero(~finite))
    for k in np.flatnonzero(finite):
        names.append(pair_names[k])
        columns.append(cube.values[k])
    for extra in extra_predictors:
        col = cube.si.column(extra)
        if col.kind == "numeric":
            names.append(extra)
            columns.append(col.values.astype(float))
        else:
            for level in sorted(set(col.values.tolist())):
                names.append(f"{extra}_{level}")
                columns.append((col.values == level).astype(float))
    matrix = np.column_stack(columns) if columns else np.empty((cube.n_samples, 0))
    spans = matrix.max(axis=0) - matrix.min(axis=0) if matrix.size else np.array([])
    keep = spans > 0
    dropped_const = tuple(n for n, k in zip(names, keep) if not k)
    dataset = MlDataset(
        response_name=response,
        response=np.array(resp.values),
        predictor_names=[n for n, k in zip(names, keep) if k],
        predictors=matrix[:, keep],
    )
    return dataset, MlBuildReport(dropped_nan, dropped_const)


def correlation_cutoff_filter(dataset: MlDataset, cutoff: float) -> MlDataset:
    """Greedily drop predictors until every pairwise |Pearson r| is below cutoff.

    At each step the most correlated remaining pair is taken and the member
    with the larger mean absolute correlation to the remaining predictors is
    removed (ties drop the lexicographically later name). Correlations among
    survivors do not change when a column is removed, so the matrix is built
    once and the removal sequence replayed from a pre-sorted pair list.
    """
    if not 0.0 < cutoff <= 1.0:
        raise ValueError(f"cutoff must lie in (0, 1], got {cutoff}")
    p = len(dataset.predictor_names)
    if p < 1:
        raise SelectionError("dataset has no predictors")
    names = dataset.predictor_names
    x = dataset.predictors
    if p == 1:
        return MlDataset(dataset.response_name, dataset.response, list(names), np.array(x))

    corr = np.abs(np.corrcoef(x.T))
    corr = np.nan_to_num(corr, nan=0.0)
    np.fill_diagonal(corr, 0.0)
    iu, ju = np.triu_indices(p, k=1)
    offending = corr[iu, ju] >= cutoff
    iu, ju = iu[offending], ju[offending]
    # highest correlation first; row-major tie order matches an argmax scan
    order = np.lexsort((ju, iu, -corr[iu, ju]))

    active = np.ones(p, dtype=bool)
    rowsum = corr.sum(axis=1)
    n_active = p
    for k in order:
        i, j = int(iu[k]), int(ju[k])
        if not (active[i] and active[j]):
            continue
        mean_i = rowsum[i] / (n_active - 1)
        mean_j = rowsum[j] / (n_active - 1)
        if mean_i > mean_j:
            drop = i
        elif mean_j > mean_i:
            drop = j
        else:
            drop = i if names[i] > names[j] else j
        active[drop] = False
        rowsum -= corr[:, drop]
        n_active -= 1
        if n_active == 1:
            break
    keep = np.flatnonzero(active)
    return MlDataset(
        dataset.response_name,
        dataset.response,
        [names[k] for k in keep],
        np.array(x[:, keep]),
    )


def write_ml_csv(dataset: MlDataset, path) -> None:
    """Response first, then predictors, one row per sample, 17-digit floats."""
    numeric_response = dataset.response.dtype.kind in "fiub"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([dataset.response_name] + dataset.predictor_names)
        for r in range(dataset.predictors.shape[0]):
            lead = (
                f"{float(dataset.response[r]):.17g}"
                if numeric_response
                else str(dataset.response[r])
            )
            writer.writerow(
                [lead] + [f"{v:.17g}" for v in dataset.predictors[r]]
            )


def export_ml_matrix(
    cube: NriCube, response: str, extra_predictors=(), path=None
) -> MlBuildReport:
    """Build the ML matrix and write it as CSV; returns the build report."""
    dataset, report = build_ml_dataset(cube, response, extra_predictors)
    if path is not None:
        write_ml_csv(dataset, path)
    return report
