"""Spectral library container: spectra matrix, wavelength grid, supplementary info.

A :class:`Speclib` couples a samples-by-bands matrix of radiometric values with
the band-center wavelengths, their full-width-half-maximum values, an optional
per-sample supplementary-information table (SI) and a set of wavelength ranges
flagged invalid. Wavelengths are always stored in nanometers; micrometer input
is detected and converted at construction. Instances are immutable: every
operation returns a new value, so they are safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from numpy.typing import NDArray

from specwb.errors import GridError, SelectionError

__all__ = [
    "WavelengthGrid",
    "SIColumn",
    "SITable",
    "MaskRanges",
    "Speclib",
    "default_fwhm",
    "spad_to_chlorophyll",
    "SPAD_POLE",
]

# Grids whose largest center is below this are taken to be micrometers; no
# real sensor has every band center below 100 nm.
UM_DETECTION_MAX = 100.0

VALUE_UNITS = ("reflectance", "percent", "counts")

SPAD_POLE = 148.84
SPAD_SCALE = 117.1


def default_fwhm(centers: NDArray[np.floating]) -> NDArray[np.float64]:
    """Approximate band widths by neighbor differences (last band copies its predecessor)."""
    centers = np.asarray(centers, dtype=float)
    if centers.size == 1:
        return np.array([1.0])
    d = np.diff(centers)
    return np.concatenate([d, d[-1:]])


@dataclass(frozen=True)
class WavelengthGrid:
    """Band centers and fwhm values, both in nm, strictly increasing centers."""

    centers: NDArray[np.float64]
    fwhm: NDArray[np.float64]

    def __post_init__(self):
        centers = _frozen(np.asarray(self.centers, dtype=float))
        fwhm = _frozen(np.asarray(self.fwhm, dtype=float))
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "fwhm", fwhm)
        if centers.ndim != 1 or fwhm.ndim != 1:
            raise GridError("wavelength centers and fwhm must be 1-D")
        if centers.size == 0:
            raise GridError("wavelength grid is empty")
        if np.any(~np.isfinite(centers)):
            raise GridError("NaN wavelength in grid")
        if centers.size != fwhm.size:
            raise GridError(
                f"length mismatch: {centers.size} centers vs {fwhm.size} fwhm values"
            )
        if np.any(np.diff(centers) <= 0):
            raise GridError("non-monotone wavelength: centers must strictly increase")
        if np.any(~(fwhm > 0)):
            raise GridError("fwhm values must all be positive")

    @classmethod
    def build(cls, centers, fwhm=None) -> "WavelengthGrid":
        """Normalize units (µm detected when max center < 100) and fill missing fwhm."""
        centers = np.array(centers, dtype=float)
        if centers.ndim != 1:
            raise GridError("wavelength centers must be 1-D")
        if centers.size == 0:
            raise GridError("wavelength grid is empty")
        if np.any(~np.isfinite(centers)):
            raise GridError("NaN wavelength in grid")
        factor = 1000.0 if float(np.max(centers)) < UM_DETECTION_MAX else 1.0
        centers = centers * factor
        if fwhm is None:
            fwhm = default_fwhm(centers)
        else:
            fwhm = np.array(fwhm, dtype=float) * factor
        return cls(centers, fwhm)

    @property
    def n_bands(self) -> int:
        return self.centers.size

    def nearest_band(self, wavelength: float) -> int:
        """Index of the band whose center is closest (ties go to the lower wavelength)."""
        return int(np.argmin(np.abs(self.centers - float(wavelength))))

    def covers(self, wavelength: float) -> bool:
        """True when `wavelength` falls within the grid extended by half an edge fwhm."""
        lo = self.centers[0] - self.fwhm[0] / 2.0
        hi = self.centers[-1] + self.fwhm[-1] / 2.0
        return lo <= wavelength <= hi


def _frozen(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, copy=True)
    out.flags.writeable = False
    return out


def _detect_kind(values) -> tuple[str, np.ndarray]:
    arr = np.asarray(values)
    if arr.dtype.kind in "fiub":
        return "numeric", arr.astype(float)
    try:
        return "numeric", np.array([float(v) for v in arr.ravel()]).reshape(arr.shape)
    except (TypeError, ValueError):
        return "categorical", np.array([str(v) for v in arr.ravel()], dtype=object)


@dataclass(frozen=True)
class SIColumn:
    """One supplementary-information column: numeric, categorical or free text."""

    kind: str
    values: np.ndarray

    def __post_init__(self):
        if self.kind not in ("numeric", "categorical", "text"):
            raise ValueError(f"unknown SI column kind {self.kind!r}")
        object.__setattr__(self, "values", _frozen(np.asarray(self.values)))


class SITable:
    """Named per-sample columns; row i of every column describes spectrum i."""

    def __init__(self, columns: dict[str, SIColumn] | None = None):
        self._columns: dict[str, SIColumn] = dict(columns or {})
        lengths = {c.values.size for c in self._columns.values()}
        if len(lengths) > 1:
            raise ValueError(f"SI columns have differing row counts: {sorted(lengths)}")

    @classmethod
    def from_mapping(cls, mapping: dict | None) -> "SITable":
        """Build a table from name -> values, detecting each column's kind."""
        if mapping is None:
            return cls()
        cols = {}
        for name, values in mapping.items():
            if isinstance(values, SIColumn):
                cols[name] = values
            else:
                kind, arr = _detect_kind(values)
                cols[name] = SIColumn(kind, arr)
        return cls(cols)

    @property
    def names(self) -> list[str]:
        return list(self._columns)

    @property
    def n_rows(self) -> int:
        for col in self._columns.values():
            return col.values.size
        return 0

    def __len__(self) -> int:
        return len(self._columns)

    def __contains__(self, name: str) -> bool:
        return name in self._columns

    def column(self, name: str) -> SIColumn:
        if name not in self._columns:
            raise SelectionError(
                f"unknown SI column {name!r}; available: {', '.join(self.names) or '(none)'}"
            )
        return self._columns[name]

    def values(self, name: str) -> np.ndarray:
        return self.column(name).values

    def subset_rows(self, index) -> "SITable":
        return SITable(
            {n: SIColumn(c.kind, c.values[index]) for n, c in self._columns.items()}
        )

    def with_column(self, name: str, values, kind: str | None = None) -> "SITable":
        if kind is None:
            kind, arr = _detect_kind(values)
        else:
            arr = np.asarray(values)
        cols = dict(self._columns)
        cols[name] = SIColumn(kind, arr)
        return SITable(cols)

    def equals(self, other: "SITable") -> bool:
        if self.names != other.names:
            return False
        for name in self.names:
            a, b = self._columns[name], other._columns[name]
            if a.kind != b.kind or not np.array_equal(a.values, b.values):
                return False
        return True


class MaskRanges:
    """Half-open wavelength intervals [lo, hi) in nm flagged invalid."""

    def __init__(self, pairs: Iterable[tuple[float, float]] = ()):
        norm: list[tuple[float, float]] = []
        for lo, hi in sorted((float(lo), float(hi)) for lo, hi in pairs):
            if not lo < hi:
                raise ValueError(f"mask range [{lo}, {hi}) must have lo < hi")
            if norm and lo <= norm[-1][1]:
                norm[-1] = (norm[-1][0], max(norm[-1][1], hi))
            else:
                norm.append((lo, hi))
        self.pairs: tuple[tuple[float, float], ...] = tuple(norm)

    def __bool__(self) -> bool:
        return bool(self.pairs)

    def __eq__(self, other) -> bool:
        return isinstance(other, MaskRanges) and self.pairs == other.pairs

    def __repr__(self) -> str:
        return f"MaskRanges({list(self.pairs)!r})"

    def union(self, other: "MaskRanges") -> "MaskRanges":
        return MaskRanges(self.pairs + other.pairs)

    def contains(self, wavelengths) -> np.ndarray:
        wl = np.asarray(wavelengths, dtype=float)
        hit = np.zeros(wl.shape, dtype=bool)
        for lo, hi in self.pairs:
            hit |= (wl >= lo) & (wl < hi)
        return hit


class Speclib:
    """Immutable spectra matrix (samples x bands) with grid, SI and mask metadata.

    Rows carry stable integer ids assigned at creation and preserved through
    subsetting, so derived results can be joined back to the SI table.
    """

    def __init__(
        self,
        values,
        wavelength=None,
        fwhm=None,
        si: SITable | dict | None = None,
        mask: MaskRanges | Sequence[tuple[float, float]] | None = None,
        value_unit: str = "reflectance",
        ids=None,
        grid: WavelengthGrid | None = None,
    ):
        values = np.array(values, dtype=float)
        if values.ndim == 1:
            values = values.reshape(1, -1)
        if values.ndim != 2 or values.size == 0:
            raise GridError("spectra must form a non-empty samples x bands matrix")
        if grid is None:
            if wavelength is None:
                raise GridError("wavelength centers are required")
            grid = WavelengthGrid.build(wavelength, fwhm)
        if values.shape[1] != grid.n_bands:
            raise GridError(
                f"dimension mismatch: {values.shape[1]} spectra columns vs "
                f"{grid.n_bands} wavelengths"
            )
        if not isinstance(si, SITable):
            si = SITable.from_mapping(si)
        if len(si) and si.n_rows != values.shape[0]:
            raise GridError(
                f"SI row count {si.n_rows} does not match {values.shape[0]} spectra"
            )
        if mask is None:
            mask = MaskRanges()
        elif not isinstance(mask, MaskRanges):
            mask = MaskRanges(mask)
        if value_unit not in VALUE_UNITS:
            raise ValueError(f"value_unit must be one of {VALUE_UNITS}")
        if ids is None:
            ids = np.arange(values.shape[0], dtype=np.int64)
        else:
            ids = np.asarray(ids, dtype=np.int64)
            if ids.shape != (values.shape[0],):
                raise GridError("ids must have one entry per spectrum")

        self.values = _frozen(values)
        self.grid = grid
        self.si = si
        self.mask = mask
        self.value_unit = value_unit
        self.ids = _frozen(ids)

    # -- basic accessors -------------------------------------------------

    @property
    def n_spectra(self) -> int:
        return self.values.shape[0]

    @property
    def n_bands(self) -> int:
        return self.values.shape[1]

    @property
    def wavelength(self) -> NDArray[np.float64]:
        return self.grid.centers

    @property
    def fwhm(self) -> NDArray[np.float64]:
        return self.grid.fwhm

    def wavelength_in(self, unit: str) -> NDArray[np.float64]:
        """Centers in `nm` or `um`; the µm values multiply back to the stored nm exactly
        whenever such a double exists."""
        if unit == "nm":
            return self.grid.centers
        if unit in ("um", "µm"):
            return _nm_to_um(self.grid.centers)
        raise ValueError(f"unknown wavelength unit {unit!r}")

    def replace(self, **kw) -> "Speclib":
        """New Speclib with selected parts swapped out (values, grid, si, ...)."""
        args = dict(
            values=self.values,
            grid=self.grid,
            si=self.si,
            mask=self.mask,
            value_unit=self.value_unit,
            ids=self.ids,
        )
        args.update(kw)
        return Speclib(**args)

    def __repr__(self) -> str:
        lo, hi = self.wavelength[0], self.wavelength[-1]
        return (
            f"<Speclib {self.n_spectra} spectra x {self.n_bands} bands, "
            f"{lo:g}-{hi:g} nm, unit={self.value_unit}, si={self.si.names}>"
        )

    # -- operations ------------------------------------------------------

    def subset_wavelength(self, lo: float, hi: float) -> "Speclib":
        """Keep bands with lo <= center <= hi; SI rows are unchanged."""
        if not lo < hi:
            raise SelectionError(f"need lo < hi, got [{lo}, {hi}]")
        keep = (self.wavelength >= lo) & (self.wavelength <= hi)
        if not np.any(keep):
            raise SelectionError(f"no band inside [{lo}, {hi}] nm")
        grid = WavelengthGrid(self.wavelength[keep], self.fwhm[keep])
        return self.replace(values=self.values[:, keep], grid=grid)

    def filter_si(self, column: str, predicate) -> "Speclib":
        """Keep exactly the spectra whose SI value matches.

        `predicate` is a callable on one value, or a plain value compared for
        equality.
        """
        col = self.si.column(column)
        if callable(predicate):
            keep = np.fromiter(
                (bool(predicate(v)) for v in col.values), dtype=bool, count=col.values.size
            )
        else:
            keep = col.values == predicate
        return self.replace(
            values=self.values[keep], si=self.si.subset_rows(keep), ids=self.ids[keep]
        )

    def mask_and_interpolate(self, ranges) -> "Speclib":
        """Replace values inside masked wavelength ranges by linear interpolation.

        Masked bands at the grid edges have no bracketing neighbors and are
        dropped instead. The applied ranges are recorded on the result.
        """
        if not isinstance(ranges, MaskRanges):
            ranges = MaskRanges(ranges)
        masked = ranges.contains(self.wavelength)
        if np.all(masked):
            raise SelectionError("mask covers the entire wavelength grid")
        if not np.any(masked):
            return self.replace(mask=self.mask.union(ranges))

        keep_idx = np.flatnonzero(~masked)
        first, last = keep_idx[0], keep_idx[-1]
        sel = slice(first, last + 1)
        wl = self.wavelength[sel]
        values = np.array(self.values[:, sel])
        inner_masked = masked[sel]

        good = np.flatnonzero(~inner_masked)
        for k in np.flatnonzero(inner_masked):
            l = good[np.searchsorted(good, k) - 1]
            r = good[np.searchsorted(good, k)]
            w = (wl[k] - wl[l]) / (wl[r] - wl[l])
            values[:, k] = self.values[:, first + l] * (1.0 - w) + self.values[
                :, first + r
            ] * w
        grid = WavelengthGrid(wl, self.fwhm[sel])
        return self.replace(values=values, grid=grid, mask=self.mask.union(ranges))


def _nm_to_um(centers: np.ndarray) -> np.ndarray:
    um = centers / 1000.0
    bad = um * 1000.0 != centers
    if np.any(bad):
        # the correctly rounded quotient need not multiply back exactly; a
        # neighboring double sometimes does
        for cand in (np.nextafter(um, np.inf), np.nextafter(um, -np.inf)):
            fix = bad & (cand * 1000.0 == centers)
            um = np.where(fix, cand, um)
            bad &= ~fix
    return um


def spad_to_chlorophyll(spad):
    """Convert SPAD chlorophyll-meter readings to chlorophyll content in µg/cm²."""
    arr = np.asarray(spad, dtype=float)
    if np.any(arr >= SPAD_POLE):
        raise ValueError(f"SPAD value at or beyond the {SPAD_POLE} pole")
    out = SPAD_SCALE * arr / (SPAD_POLE - arr)
    return float(out) if np.isscalar(spad) or arr.ndim == 0 else out
