"""Reading and writing spectra as CSV tables and ENVI raster cubes.

CSV dialect: comma separated, "." decimal, UTF-8; the first row is a header
holding band wavelengths, optionally preceded by supplementary-information
columns prefixed "si:". A leading "#fwhm,..." comment row carries band widths
when they differ from the neighbor-difference default, so round trips
preserve them exactly.

ENVI cubes are a text ".hdr" plus a raw binary file in band-sequential (bsq),
band-interleaved-by-line (bil) or band-interleaved-by-pixel (bip) layout.
Pixels map to Speclib rows line by line (row-major), and the chunk protocol
below streams cubes larger than memory through row-local kernels.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np

from specwb.errors import FormatError, SelectionError
from specwb.speclib import SITable, Speclib, WavelengthGrid, default_fwhm

__all__ = [
    "read_csv_speclib",
    "write_csv_speclib",
    "EnviHeader",
    "parse_envi_header",
    "write_envi_header",
    "read_envi_cube",
    "write_envi_cube",
    "EnviCubeReader",
    "EnviCubeWriter",
    "ArrayCubeReader",
    "ArrayCubeWriter",
    "ChunkPlan",
    "plan_chunks",
    "process_chunked",
]

_FMT = "%.17g"

ENVI_DTYPES = {2: "i2", 4: "f4", 5: "f8", 12: "u2"}
INTERLEAVES = ("bsq", "bil", "bip")


def _fmt(value: float) -> str:
    return _FMT % value


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def read_csv_speclib(path) -> Speclib:
    """Read a spectra table; one row per spectrum, wavelength header, si: columns."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        rows = [(reader.line_num, row) for row in reader if row]
    if not rows:
        raise FormatError(f"{path}: empty file")

    fwhm = None
    while rows and rows[0][1][0].startswith("#"):
        lineno, row = rows.pop(0)
        if row[0] == "#fwhm":
            try:
                fwhm = np.array([float(v) for v in row[1:]])
            except ValueError as exc:
                raise FormatError(f"{path}: bad #fwhm row at line {lineno}: {exc}") from None
    if not rows:
        raise FormatError(f"{path}: no header row")

    header_line, header = rows.pop(0)
    si_names = []
    k = 0
    while k < len(header) and header[k].startswith("si:"):
        si_names.append(header[k][3:])
        k += 1
    wl_fields = header[k:]
    if not wl_fields:
        raise FormatError(f"{path}: header has no wavelength columns")
    try:
        wavelength = np.array([float(v) for v in wl_fields])
    except ValueError:
        bad = next(v for v in wl_fields if not _is_float(v))
        raise FormatError(
            f"{path}: unparsable wavelength header entry {bad!r} at line {header_line}"
        ) from None

    n_si = len(si_names)
    si_data: list[list[str]] = [[] for _ in si_names]
    values = []
    for lineno, row in rows:
        if len(row) != len(header):
            raise FormatError(
                f"{path}: ragged row at line {lineno}: expected {len(header)} fields, "
                f"got {len(row)}"
            )
        for c in range(n_si):
            si_data[c].append(row[c])
        try:
            values.append([float(v) for v in row[n_si:]])
        except ValueError:
            bad = next(v for v in row[n_si:] if not _is_float(v))
            raise FormatError(
                f"{path}: unparsable value {bad!r} at line {lineno}"
            ) from None
    if not values:
        raise FormatError(f"{path}: no data rows")
    if fwhm is not None and fwhm.size != wavelength.size:
        raise FormatError(
            f"{path}: #fwhm row has {fwhm.size} entries for {wavelength.size} bands"
        )
    si = SITable.from_mapping({n: v for n, v in zip(si_names, si_data)})
    return Speclib(np.array(values), wavelength, fwhm=fwhm, si=si)


def _is_float(text: str) -> bool:
    try:
        float(text)
        return True
    except ValueError:
        return False


def write_csv_speclib(s: Speclib, path) -> None:
    """Write a table readable by `read_csv_speclib`, values at 17 digits."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if not np.array_equal(s.fwhm, default_fwhm(s.wavelength)):
            writer.writerow(["#fwhm"] + [_fmt(v) for v in s.fwhm])
        writer.writerow(
            [f"si:{n}" for n in s.si.names] + [_fmt(w) for w in s.wavelength]
        )
        si_cols = [s.si.column(n) for n in s.si.names]
        for r in range(s.n_spectra):
            lead = [
                _fmt(c.values[r]) if c.kind == "numeric" else str(c.values[r])
                for c in si_cols
            ]
            writer.writerow(lead + [_fmt(v) for v in s.values[r]])


# ---------------------------------------------------------------------------
# ENVI header
# ---------------------------------------------------------------------------

@dataclass
class EnviHeader:
    """The subset of ENVI header fields this package interprets.

    Unknown keys are preserved verbatim in `extra` and written back on
    rewrite.
    """

    samples: int
    lines: int
    bands: int
    interleave: str = "bsq"
    data_type: int = 5
    byte_order: int = 0
    wavelength: np.ndarray | None = None
    fwhm: np.ndarray | None = None
    extra: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if min(self.samples, self.lines, self.bands) < 1:
            raise FormatError("samples, lines and bands must all be >= 1")
        self.interleave = self.interleave.lower()
        if self.interleave not in INTERLEAVES:
            raise FormatError(f"unsupported interleave {self.interleave!r}")
        if self.data_type not in ENVI_DTYPES:
            raise FormatError(
                f"unsupported data_type {self.data_type}; supported: "
                f"{sorted(ENVI_DTYPES)}"
            )
        if self.byte_order not in (0, 1):
            raise FormatError(f"byte_order must be 0 or 1, got {self.byte_order}")
        if self.wavelength is not None:
            self.wavelength = np.asarray(self.wavelength, dtype=float)
            if self.wavelength.size != self.bands:
                raise FormatError(
                    f"{self.wavelength.size} wavelengths for {self.bands} bands"
                )
        if self.fwhm is not None:
            self.fwhm = np.asarray(self.fwhm, dtype=float)
            if self.fwhm.size != self.bands:
                raise FormatError(f"{self.fwhm.size} fwhm values for {self.bands} bands")

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(("<" if self.byte_order == 0 else ">") + ENVI_DTYPES[self.data_type])

    @property
    def offset(self) -> int:
        return int(self.extra.get("header offset", "0"))

    @property
    def n_values(self) -> int:
        return self.samples * self.lines * self.bands


_KNOWN_KEYS = {
    "samples", "lines", "bands", "interleave", "data type", "byte order",
    "wavelength", "fwhm", "wavelength units",
}


def parse_envi_header(path) -> EnviHeader:
    with open(path, encoding="utf-8", errors="replace") as fh:
        text = fh.read()
    lines = text.splitlines()
    if lines and lines[0].strip().upper() == "ENVI":
        lines = lines[1:]
    fields: dict[str, str] = {}
    i = 0
    while i < len(lines):
        line = lines[i]
        i += 1
        if "=" not in line or line.lstrip().startswith(";"):
            continue
        key, _, value = line.partition("=")
        key = key.strip().lower()
        value = value.strip()
        if value.startswith("{"):
            while "}" not in value and i < len(lines):
                value += "\n" + lines[i].strip()
                i += 1
            value = value.strip("{}").strip()
        fields[key] = value

    def need(key):
        if key not in fields:
            raise FormatError(f"{path}: missing required header field {key!r}")
        return fields[key]

    def floats(key):
        return np.array(
            [float(v) for v in fields[key].replace("\n", ",").split(",") if v.strip()]
        )

    wavelength = floats("wavelength") if "wavelength" in fields else None
    fwhm = floats("fwhm") if "fwhm" in fields else None
    units = fields.get("wavelength units", "").lower()
    if units.startswith("micro"):
        if wavelength is not None:
            wavelength = wavelength * 1000.0
        if fwhm is not None:
            fwhm = fwhm * 1000.0
        fields["wavelength units"] = "Nanometers"
    extra = {k: v for k, v in fields.items() if k not in _KNOWN_KEYS or k == "wavelength units"}
    extra.pop("wavelength", None)
    return EnviHeader(
        samples=int(need("samples")),
        lines=int(need("lines")),
        bands=int(need("bands")),
        interleave=fields.get("interleave", "bsq"),
        data_type=int(need("data type")),
        byte_order=int(fields.get("byte order", "0")),
        wavelength=wavelength,
        fwhm=fwhm,
        extra=extra,
    )


def write_envi_header(header: EnviHeader, path) -> None:
    out = ["ENVI"]
    out.append(f"samples = {header.samples}")
    out.append(f"lines = {header.lines}")
    out.append(f"bands = {header.bands}")
    out.append(f"data type = {header.data_type}")
    out.append(f"interleave = {header.interleave}")
    out.append(f"byte order = {header.byte_order}")
    if "wavelength units" not in header.extra:
        out.append("wavelength units = Nanometers")
    for key, value in header.extra.items():
        out.append(f"{key} = {value}")
    if header.wavelength is not None:
        out.append("wavelength = {" + ", ".join(_fmt(v) for v in header.wavelength) + "}")
    if header.fwhm is not None:
        out.append("fwhm = {" + ", ".join(_fmt(v) for v in header.fwhm) + "}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(out) + "\n")


def _header_path_for(data_path) -> str:
    data_path = os.fspath(data_path)
    for cand in (data_path + ".hdr", os.path.splitext(data_path)[0] + ".hdr"):
        if os.path.exists(cand):
            return cand
    raise FormatError(f"no .hdr header found next to {data_path}")


def _check_size(path, header: EnviHeader) -> None:
    expected = header.offset + header.n_values * header.dtype.itemsize
    actual = os.path.getsize(path)
    if actual != expected:
        raise FormatError(
            f"{path}: size mismatch: {actual} bytes on disk, header implies {expected}"
        )


def _cube_to_pixels(arr, header: EnviHeader) -> np.ndarray:
    s, l, b = header.samples, header.lines, header.bands
    if header.interleave == "bip":
        cube = arr.reshape(l, s, b)
    elif header.interleave == "bil":
        cube = arr.reshape(l, b, s).transpose(0, 2, 1)
    else:
        cube = arr.reshape(b, l, s).transpose(1, 2, 0)
    return np.ascontiguousarray(cube, dtype=float).reshape(l * s, b)


def _pixels_to_cube(values, header: EnviHeader, nlines) -> np.ndarray:
    s, b = header.samples, header.bands
    cube = values.reshape(nlines, s, b)
    if header.interleave == "bip":
        out = cube
    elif header.interleave == "bil":
        out = cube.transpose(0, 2, 1)
    else:
        out = cube.transpose(2, 0, 1)
    return np.ascontiguousarray(out)


def _pixel_si(samples, row0, nrows) -> SITable:
    x = np.tile(np.arange(samples), nrows)
    y = np.repeat(np.arange(row0, row0 + nrows), samples)
    return SITable.from_mapping({"x": x.astype(float), "y": y.astype(float)})


def _grid_from_header(header: EnviHeader, path) -> WavelengthGrid:
    if header.wavelength is None:
        raise FormatError(f"{path}: missing wavelength field in header")
    units = header.extra.get("wavelength units", "").lower()
    if units.startswith("nano"):
        # explicitly nanometers: bypass the magnitude-based unit detection
        fwhm = header.fwhm
        if fwhm is None:
            fwhm = default_fwhm(header.wavelength)
        return WavelengthGrid(header.wavelength, fwhm)
    return WavelengthGrid.build(header.wavelength, header.fwhm)


def read_envi_cube(data_path, header_path=None) -> Speclib:
    """Read a whole cube as a Speclib, pixels in row-major order with x/y SI."""
    header_path = header_path or _header_path_for(data_path)
    header = parse_envi_header(header_path)
    grid = _grid_from_header(header, header_path)
    _check_size(data_path, header)
    raw = np.fromfile(data_path, dtype=header.dtype, count=header.n_values,
                      offset=header.offset)
    values = _cube_to_pixels(raw, header)
    unit = "counts" if header.dtype.kind in "iu" else "reflectance"
    return Speclib(
        values,
        grid=grid,
        si=_pixel_si(header.samples, 0, header.lines),
        value_unit=unit,
    )


def write_envi_cube(
    s: Speclib,
    dims: tuple[int, int],
    data_path,
    data_type: int = 5,
    interleave: str = "bsq",
    byte_order: int = 0,
    header_path=None,
) -> None:
    """Write a Speclib whose rows are pixels as an ENVI cube (dims = samples, lines)."""
    samples, lines = dims
    if s.n_spectra != samples * lines:
        raise SelectionError(
            f"row-count mismatch: {s.n_spectra} spectra cannot fill a "
            f"{samples}x{lines} cube"
        )
    header = EnviHeader(
        samples=samples,
        lines=lines,
        bands=s.n_bands,
        interleave=interleave,
        data_type=data_type,
        byte_order=byte_order,
        wavelength=s.wavelength,
        fwhm=s.fwhm,
    )
    cube = _pixels_to_cube(s.values, header, lines)
    if header.dtype.kind in "iu":
        cube = np.rint(cube)
    cube.astype(header.dtype).tofile(os.fspath(data_path))
    write_envi_header(header, header_path or os.fspath(data_path) + ".hdr")


# ---------------------------------------------------------------------------
# chunked processing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChunkPlan:
    """Row blocks partitioning [0, lines) exactly, in order, without overlap."""

    offsets: np.ndarray
    heights: np.ndarray

    def __post_init__(self):
        offsets = np.asarray(self.offsets, dtype=np.int64)
        heights = np.asarray(self.heights, dtype=np.int64)
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "heights", heights)
        if offsets.size != heights.size or offsets.size == 0:
            raise ValueError("offsets and heights must be non-empty and equal length")
        if offsets[0] != 0 or np.any(heights < 1):
            raise ValueError("chunks must start at row 0 with positive heights")
        if np.any(offsets[1:] != offsets[:-1] + heights[:-1]):
            raise ValueError("chunks must be contiguous and ordered")

    @property
    def n(self) -> int:
        return self.offsets.size

    @property
    def lines(self) -> int:
        return int(self.offsets[-1] + self.heights[-1])

    def __iter__(self):
        return zip(self.offsets.tolist(), self.heights.tolist())


def plan_chunks(lines: int, target_bytes: int, row_bytes: int) -> ChunkPlan:
    """Blocks of ceil(target_bytes / row_bytes) rows, last one truncated."""
    if min(lines, target_bytes, row_bytes) < 1:
        raise ValueError("lines, target_bytes and row_bytes must all be >= 1")
    rows = max(1, math.ceil(target_bytes / row_bytes))
    offsets = np.arange(0, lines, rows, dtype=np.int64)
    heights = np.minimum(rows, lines - offsets)
    return ChunkPlan(offsets, heights)


class EnviCubeReader:
    """Block access to an ENVI cube via a read-only memory map."""

    def __init__(self, data_path, header_path=None):
        header_path = header_path or _header_path_for(data_path)
        self.header = parse_envi_header(header_path)
        self.grid = _grid_from_header(self.header, header_path)
        _check_size(data_path, self.header)
        h = self.header
        shape = {
            "bip": (h.lines, h.samples, h.bands),
            "bil": (h.lines, h.bands, h.samples),
            "bsq": (h.bands, h.lines, h.samples),
        }[h.interleave]
        self._mm = np.memmap(
            os.fspath(data_path), dtype=h.dtype, mode="r", offset=h.offset, shape=shape
        )
        self._unit = "counts" if h.dtype.kind in "iu" else "reflectance"

    @property
    def lines(self) -> int:
        return self.header.lines

    @property
    def samples(self) -> int:
        return self.header.samples

    @property
    def bands(self) -> int:
        return self.header.bands

    def read_block(self, row: int, nrows: int) -> Speclib:
        if row < 0 or row + nrows > self.lines:
            raise SelectionError(f"block [{row}, {row + nrows}) outside {self.lines} lines")
        h = self.header
        if h.interleave == "bip":
            cube = self._mm[row : row + nrows]
        elif h.interleave == "bil":
            cube = self._mm[row : row + nrows].transpose(0, 2, 1)
        else:
            cube = self._mm[:, row : row + nrows, :].transpose(1, 2, 0)
        values = np.ascontiguousarray(cube, dtype=float).reshape(-1, h.bands)
        ids = row * h.samples + np.arange(values.shape[0])
        return Speclib(
            values,
            grid=self.grid,
            si=_pixel_si(h.samples, row, nrows),
            value_unit=self._unit,
            ids=ids,
        )

    def read_all(self) -> Speclib:
        return self.read_block(0, self.lines)

    def close(self):
        self._mm = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class EnviCubeWriter:
    """Block-wise ENVI cube sink with a pre-declared band count."""

    def __init__(
        self,
        data_path,
        samples: int,
        lines: int,
        bands: int,
        wavelength,
        fwhm=None,
        data_type: int = 5,
        interleave: str = "bsq",
        byte_order: int = 0,
        header_path=None,
    ):
        if fwhm is None and wavelength is not None:
            fwhm = default_fwhm(np.asarray(wavelength, dtype=float))
        self.header = EnviHeader(
            samples=samples,
            lines=lines,
            bands=bands,
            interleave=interleave,
            data_type=data_type,
            byte_order=byte_order,
            wavelength=wavelength,
            fwhm=fwhm,
        )
        self._data_path = os.fspath(data_path)
        self._header_path = header_path or self._data_path + ".hdr"
        h = self.header
        shape = {
            "bip": (h.lines, h.samples, h.bands),
            "bil": (h.lines, h.bands, h.samples),
            "bsq": (h.bands, h.lines, h.samples),
        }[h.interleave]
        self._mm = np.memmap(self._data_path, dtype=h.dtype, mode="w+", shape=shape)
        self._closed = False

    @property
    def bands(self) -> int:
        return self.header.bands

    def write_block(self, row: int, values) -> None:
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values.reshape(-1, 1)
        h = self.header
        if values.shape[1] != h.bands:
            raise FormatError(
                f"block has {values.shape[1]} bands but the sink declares {h.bands}"
            )
        if values.shape[0] % h.samples != 0:
            raise FormatError(
                f"block of {values.shape[0]} pixels is not a whole number of "
                f"{h.samples}-pixel lines"
            )
        nrows = values.shape[0] // h.samples
        if row < 0 or row + nrows > h.lines:
            raise SelectionError(f"block [{row}, {row + nrows}) outside {h.lines} lines")
        if h.dtype.kind in "iu":
            values = np.rint(values)
        cube = values.reshape(nrows, h.samples, h.bands)
        if h.interleave == "bip":
            self._mm[row : row + nrows] = cube
        elif h.interleave == "bil":
            self._mm[row : row + nrows] = cube.transpose(0, 2, 1)
        else:
            self._mm[:, row : row + nrows, :] = cube.transpose(2, 0, 1)
        del cube

    def close(self) -> None:
        if self._closed:
            return
        self._mm.flush()
        self._mm = None
        write_envi_header(self.header, self._header_path)
        self._closed = True

    def abort(self) -> None:
        """Remove partial output so no invalid cube is left behind."""
        self._mm = None
        for path in (self._data_path, self._header_path):
            if os.path.exists(path):
                os.unlink(path)
        self._closed = True


class ArrayCubeReader:
    """In-memory cube source with the block protocol (testing and pipelines)."""

    def __init__(self, s: Speclib, samples: int, lines: int):
        if s.n_spectra != samples * lines:
            raise SelectionError("speclib rows do not fill samples x lines")
        self._s = s
        self.samples = samples
        self.lines = lines
        self.grid = s.grid

    @property
    def bands(self) -> int:
        return self._s.n_bands

    def read_block(self, row: int, nrows: int) -> Speclib:
        sel = slice(row * self.samples, (row + nrows) * self.samples)
        return Speclib(
            self._s.values[sel],
            grid=self._s.grid,
            si=_pixel_si(self.samples, row, nrows),
            value_unit=self._s.value_unit,
            ids=np.arange(sel.start, sel.stop),
        )

    def read_all(self) -> Speclib:
        return self.read_block(0, self.lines)


class ArrayCubeWriter:
    """In-memory cube sink with a pre-declared band count."""

    def __init__(self, samples: int, lines: int, bands: int):
        self.samples = samples
        self.lines = lines
        self.bands = bands
        self._out = np.full((lines * samples, bands), np.nan)
        self.aborted = False

    def write_block(self, row: int, values) -> None:
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values.reshape(-1, 1)
        if values.shape[1] != self.bands:
            raise FormatError(
                f"block has {values.shape[1]} bands but the sink declares {self.bands}"
            )
        self._out[row * self.samples : row * self.samples + values.shape[0]] = values

    def close(self) -> None:
        pass

    def abort(self) -> None:
        self.aborted = True

    @property
    def result(self) -> np.ndarray:
        return self._out


def process_chunked(reader, writer, kernel, plan: ChunkPlan) -> None:
    """Stream a cube through a row-local kernel, one chunk at a time.

    The kernel maps a Speclib block to a Speclib or a matrix with a constant
    band count equal to the sink's declared one. Exactly one chunk is resident
    at a time; on failure the sink's partial output is removed and the error
    re-raised.
    """
    if plan.lines != reader.lines:
        raise ValueError(f"plan covers {plan.lines} lines, cube has {reader.lines}")
    try:
        for row, nrows in plan:
            block = reader.read_block(row, nrows)
            out = kernel(block)
            values = out.values if isinstance(out, Speclib) else np.asarray(out, dtype=float)
            if values.ndim == 1:
                values = values.reshape(-1, 1)
            if values.shape[0] != block.n_spectra:
                raise FormatError(
                    "kernel must be row-local: block of "
                    f"{block.n_spectra} pixels produced {values.shape[0]} rows"
                )
            writer.write_block(row, values)
        writer.close()
    except BaseException:
        writer.abort()
        raise
