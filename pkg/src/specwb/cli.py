"""Command-line frontend: one pipeline stage per invocation, composed via files.

Tables are CSV (stdout when the output path is omitted); cubes are ENVI. All
numbers are printed with 17 significant digits so outputs reparse exactly.
Exit codes: 0 success, 1 usage, 2 data error.
"""

from __future__ import annotations

import argparse
import os
import shlex
import sys

import numpy as np

from specwb import __version__
from specwb.continuum import continuum_transform, extract_features, feature_properties
from specwb.errors import FormatError, SpecwbError
from specwb.indices import INDEX_CATALOG, eval_index, parse_index, vegindex
from specwb.nri import (
    GlmStatsGrid,
    build_ml_dataset,
    correlation_cutoff_filter,
    export_correlogram,
    glm_nri,
    nri_all_pairs,
    write_ml_csv,
)
from specwb.preprocess import FilterSpec, SensorBandSpec, derivative, noise_filter, spectral_resample
from specwb.rededge import RED_EDGE_METHODS, red_edge
from specwb.spectral_io import (
    EnviCubeReader,
    EnviCubeWriter,
    plan_chunks,
    process_chunked,
    read_csv_speclib,
    read_envi_cube,
    write_csv_speclib,
    write_envi_cube,
)
from specwb.speclib import Speclib
from specwb.unmix import CONSTRAINT_MODES, unmix

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2

ENVI_SUFFIXES = (".hdr", ".img", ".dat", ".raw", ".bsq", ".bil", ".bip", ".envi")
CHUNKABLE = ("filter", "deriv", "resample", "transform", "index", "nri", "unmix")


def _fmt(v) -> str:
    return "%.17g" % float(v)


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _default_threads() -> int:
    env = os.environ.get("SPECWB_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _is_envi(path) -> bool:
    return os.path.splitext(os.fspath(path))[1].lower() in ENVI_SUFFIXES


def _resolve_envi_input(path):
    p = os.fspath(path)
    if p.lower().endswith(".hdr"):
        stem = p[:-4]
        for cand in (stem, stem + ".img", stem + ".dat", stem + ".raw", stem + ".bsq"):
            if os.path.exists(cand):
                return cand, p
        raise FormatError(f"no data file found next to header {p}")
    return p, None


def _resolve_envi_output(path):
    p = os.fspath(path)
    if p.lower().endswith(".hdr"):
        return p[:-4] + ".img", p
    return p, p + ".hdr"


def _load(path) -> Speclib:
    if _is_envi(path):
        data, hdr = _resolve_envi_input(path)
        return read_envi_cube(data, hdr)
    return read_csv_speclib(path)


class _Emitter:
    """Write CSV rows to a path, or stdout when no path is given."""

    def __init__(self, path):
        self.path = path
        self.lines: list[str] = []

    def row(self, fields):
        self.lines.append(",".join(str(f) for f in fields))

    def finish(self):
        text = "\n".join(self.lines) + "\n"
        if self.path is None:
            sys.stdout.write(text)
        else:
            with open(self.path, "w", encoding="utf-8") as fh:
                fh.write(text)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_info(args) -> int:
    s = _load(args.input)
    wl = s.wavelength
    print(f"spectra:    {s.n_spectra}")
    print(f"bands:      {s.n_bands}")
    print(f"wavelength: {wl[0]:g}-{wl[-1]:g} nm")
    print(f"fwhm:       {s.fwhm.min():g}-{s.fwhm.max():g} nm")
    print(f"unit:       {s.value_unit}")
    cols = ", ".join(f"{n}({s.si.column(n).kind})" for n in s.si.names) or "(none)"
    print(f"si columns: {cols}")
    if s.mask:
        print(f"masked:     {list(s.mask.pairs)}")
    return EXIT_OK


def cmd_convert(args) -> int:
    s = _load(args.input)
    if _is_envi(args.output):
        samples, lines = _cube_dims(s, args)
        data, hdr = _resolve_envi_output(args.output)
        write_envi_cube(
            s, (samples, lines), data,
            data_type=args.data_type, interleave=args.interleave, header_path=hdr,
        )
    else:
        write_csv_speclib(s, args.output)
    return EXIT_OK


def _cube_dims(s: Speclib, args):
    if args.samples and args.lines:
        samples, lines = args.samples, args.lines
    elif "x" in s.si and "y" in s.si:
        samples = int(np.max(s.si.values("x").astype(float))) + 1
        lines = int(np.max(s.si.values("y").astype(float))) + 1
    else:
        raise FormatError("cube output needs --samples and --lines (or x/y SI columns)")
    return samples, lines


def cmd_filter(args) -> int:
    spec = FilterSpec(
        method=args.method, window=args.window, poly_order=args.order,
        fraction=args.fraction,
    )
    write_csv_speclib(noise_filter(_load(args.input), spec), args.output)
    return EXIT_OK


def cmd_deriv(args) -> int:
    write_csv_speclib(derivative(_load(args.input), order=args.order), args.output)
    return EXIT_OK


def cmd_resample(args) -> int:
    s = _load(args.input)
    out = _resample(s, args)
    write_csv_speclib(out, args.output)
    return EXIT_OK


def _resample(s: Speclib, args) -> Speclib:
    if args.response:
        return spectral_resample(s, response=read_csv_speclib(args.response))
    if not (args.centers and args.fwhm):
        raise FormatError("resample needs --centers and --fwhm, or --response")
    centers = [float(v) for v in args.centers.split(",")]
    fwhm = [float(v) for v in args.fwhm.split(",")]
    if len(centers) != len(fwhm):
        raise FormatError(f"{len(centers)} centers but {len(fwhm)} fwhm values")
    target = [SensorBandSpec(c, f) for c, f in zip(centers, fwhm)]
    return spectral_resample(s, target=target)


def cmd_transform(args) -> int:
    out = continuum_transform(_load(args.input), method=args.method, out=args.out)
    write_csv_speclib(out, args.output)
    return EXIT_OK


def _anchor_list(text):
    return [float(v) for v in text.split(",")]


def cmd_features(args) -> int:
    s = _load(args.input)
    anchors = _anchor_list(args.anchors)
    emit = _Emitter(args.output)
    emit.row(["id", "anchor", "duplicate", "wavelength", "band_depth"])
    for per_spectrum in extract_features(s, anchors):
        for feat in per_spectrum:
            dup = "" if feat.duplicate_of is None else feat.duplicate_of
            for wl, bd in zip(feat.wavelength, feat.band_depth):
                emit.row([feat.spectrum_id, f"{feat.anchor:g}", dup, _fmt(wl), _fmt(bd)])
    emit.finish()
    return EXIT_OK


def cmd_featprops(args) -> int:
    s = _load(args.input)
    anchors = _anchor_list(args.anchors)
    fields = ("area", "max_bd", "lambda_max", "half_max_width",
              "gauss_rmse_left", "gauss_rmse_right")
    emit = _Emitter(args.output)
    header = ["id"]
    for a in anchors:
        header += [f"{f}_{a:g}" for f in fields]
    emit.row(header)
    for per_spectrum in extract_features(s, anchors):
        row = [per_spectrum[0].spectrum_id]
        for feat in per_spectrum:
            if feat.empty:
                row += [""] * len(fields)
            else:
                props = feature_properties(feat)
                row += [_fmt(getattr(props, f)) for f in fields]
        emit.row(row)
    emit.finish()
    return EXIT_OK


def cmd_index(args) -> int:
    s = _load(args.input)
    values = vegindex(s, args.name) if args.name else eval_index(parse_index(args.expr), s)
    emit = _Emitter(args.output)
    emit.row(["id", "value"])
    for sid, v in zip(s.ids, values):
        emit.row([int(sid), _fmt(v)])
    emit.finish()
    return EXIT_OK


def cmd_rededge(args) -> int:
    s = _load(args.input)
    results = red_edge(s, args.method)
    aux_keys = sorted(results[0].auxiliary) if results else []
    emit = _Emitter(args.output)
    emit.row(["id", "reip"] + aux_keys)
    for sid, res in zip(s.ids, results):
        emit.row([int(sid), _fmt(res.reip)] + [_fmt(res.auxiliary[k]) for k in aux_keys])
    emit.finish()
    return EXIT_OK


def cmd_nri(args) -> int:
    cube = nri_all_pairs(_load(args.input))
    emit = _Emitter(args.output)
    emit.row(["id"] + cube.pair_names())
    for k in range(cube.n_samples):
        emit.row([int(cube.ids[k])] + [_fmt(v) for v in cube.values[:, k]])
    emit.finish()
    return EXIT_OK


def cmd_glm(args) -> int:
    cube = nri_all_pairs(_load(args.input))
    stats = glm_nri(cube, args.response, family=args.family, n_threads=args.threads)
    stats.write_csv(args.output)
    return EXIT_OK


def cmd_correlogram(args) -> int:
    stats = GlmStatsGrid.read_csv(args.input)
    summary = export_correlogram(
        stats, args.stat, log_scale=args.log, csv_path=args.output,
        pixmap_path=args.pixmap,
    )
    for label, (wi, wj, p) in (("best", summary.best), ("worst", summary.worst)):
        print(f"{label}: wl_i={wi:g} wl_j={wj:g} p={p:.6g}")
    return EXIT_OK


def _predictor_list(text):
    return [v for v in text.split(",") if v] if text else []


def cmd_rfe(args) -> int:
    cube = nri_all_pairs(_load(args.input))
    dataset, report = build_ml_dataset(cube, args.response, _predictor_list(args.predictors))
    kept = correlation_cutoff_filter(dataset, args.cutoff)
    write_ml_csv(kept, args.output)
    dropped = len(dataset.predictor_names) - len(kept.predictor_names)
    print(
        f"kept {len(kept.predictor_names)} of {len(dataset.predictor_names)} predictors "
        f"(cutoff {args.cutoff:g}); {report.dropped_nan_pairs} NaN pairs dropped",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_export_ml(args) -> int:
    cube = nri_all_pairs(_load(args.input))
    dataset, report = build_ml_dataset(cube, args.response, _predictor_list(args.predictors))
    write_ml_csv(dataset, args.output)
    print(
        f"{len(dataset.predictor_names)} predictors; {report.dropped_nan_pairs} NaN "
        f"pairs dropped; constant columns removed: {len(report.dropped_constant)}",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_unmix(args) -> int:
    s = _load(args.input)
    em = _load(args.endmembers)
    result = unmix(s, em, constraints=args.constraints)
    emit = _Emitter(args.output)
    emit.row(["id"] + result.endmember_names + ["rmse"])
    for k in range(result.abundances.shape[0]):
        emit.row(
            [int(result.ids[k])]
            + [_fmt(v) for v in result.abundances[k]]
            + [_fmt(result.rmse[k])]
        )
    emit.finish()
    return EXIT_OK


# ---------------------------------------------------------------------------
# chunked cube runs
# ---------------------------------------------------------------------------

def _make_kernel(text: str, threads: int):
    tokens = shlex.split(text)
    if not tokens:
        raise FormatError("empty --kernel specification")
    name, rest = tokens[0], tokens[1:]
    if name not in CHUNKABLE:
        raise FormatError(
            f"kernel {name!r} is not chunkable; allowed: {', '.join(CHUNKABLE)}"
        )
    p = _ArgumentParser(prog=f"--kernel {name}", add_help=False)
    if name == "filter":
        p.add_argument("--method", required=True)
        p.add_argument("--window", type=int, default=7)
        p.add_argument("--order", type=int, default=3)
        p.add_argument("--fraction", type=float, default=0.1)
        ka = p.parse_args(rest)
        spec = FilterSpec(ka.method, ka.window, ka.order, ka.fraction)
        return lambda s: noise_filter(s, spec)
    if name == "deriv":
        p.add_argument("--order", type=int, default=1)
        ka = p.parse_args(rest)
        return lambda s: derivative(s, order=ka.order)
    if name == "resample":
        p.add_argument("--centers")
        p.add_argument("--fwhm")
        p.add_argument("--response")
        ka = p.parse_args(rest)
        return lambda s: _resample(s, ka)
    if name == "transform":
        p.add_argument("--method", default="sh")
        p.add_argument("--out", default="bd")
        ka = p.parse_args(rest)
        return lambda s: continuum_transform(s, method=ka.method, out=ka.out)
    if name == "index":
        group = p.add_mutually_exclusive_group(required=True)
        group.add_argument("--name")
        group.add_argument("--expr")
        ka = p.parse_args(rest)
        if ka.name:
            return lambda s: vegindex(s, ka.name)
        expr = parse_index(ka.expr)
        return lambda s: eval_index(expr, s)
    if name == "nri":
        return lambda s: np.ascontiguousarray(nri_all_pairs(s).values.T)
    p.add_argument("--endmembers", required=True)
    p.add_argument("--constraints", default="full", choices=CONSTRAINT_MODES)
    ka = p.parse_args(rest)
    em = _load(ka.endmembers)

    def kernel(s):
        res = unmix(s, em, constraints=ka.constraints)
        return np.column_stack([res.abundances, res.rmse])

    return kernel


def cmd_chunked(args) -> int:
    data, hdr = _resolve_envi_input(args.input)
    reader = EnviCubeReader(data, hdr)
    kernels = [_make_kernel(text, args.threads) for text in args.kernel]

    def combined(block):
        out = block
        for fn in kernels:
            if not isinstance(out, Speclib):
                raise FormatError("a table-producing kernel must be last in the chain")
            out = fn(out)
        return out

    probe = combined(reader.read_block(0, 1))
    if isinstance(probe, Speclib):
        bands, wavelength, fwhm = probe.n_bands, probe.wavelength, probe.fwhm
    else:
        arr = np.asarray(probe)
        bands = 1 if arr.ndim == 1 else arr.shape[1]
        wavelength, fwhm = np.arange(1.0, bands + 1.0), None

    row_bytes = reader.samples * max(reader.bands, bands) * 8
    plan = plan_chunks(reader.lines, args.target_mb * 2**20, row_bytes)
    out_data, out_hdr = _resolve_envi_output(args.output)
    writer = EnviCubeWriter(
        out_data, reader.samples, reader.lines, bands, wavelength, fwhm,
        data_type=args.data_type, interleave=args.interleave, header_path=out_hdr,
    )
    process_chunked(reader, writer, combined, plan)
    print(f"processed {plan.n} chunk(s) of {reader.lines} lines", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> _ArgumentParser:
    parser = _ArgumentParser(prog="specwb", description=__doc__)
    parser.add_argument("--version", action="version", version=f"specwb {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_, output=True, out_optional=False):
        p = sub.add_parser(name, help=help_)
        p.add_argument("input")
        if output:
            if out_optional:
                p.add_argument("output", nargs="?")
            else:
                p.add_argument("output")
        p.add_argument("--threads", type=int, default=_default_threads())
        p.set_defaults(func=func)
        return p

    add("info", cmd_info, "summarize a spectra file", output=False)

    p = add("convert", cmd_convert, "convert between CSV tables and ENVI cubes")
    p.add_argument("--samples", type=int)
    p.add_argument("--lines", type=int)
    p.add_argument("--data-type", type=int, default=5, choices=(2, 4, 5, 12))
    p.add_argument("--interleave", default="bsq", choices=("bsq", "bil", "bip"))

    p = add("filter", cmd_filter, "noise filtering")
    p.add_argument("--method", required=True,
                   help="sgolay|savitzky_golay|mean|lowess|spline")
    p.add_argument("--window", type=int, default=7)
    p.add_argument("--order", type=int, default=3)
    p.add_argument("--fraction", type=float, default=0.1)

    p = add("deriv", cmd_deriv, "spectral derivative")
    p.add_argument("--order", type=int, default=1, choices=(1, 2))

    p = add("resample", cmd_resample, "resample to coarser sensor bands")
    p.add_argument("--centers", help="comma-separated band centers (nm)")
    p.add_argument("--fwhm", help="comma-separated fwhm values (nm)")
    p.add_argument("--response", help="CSV of response curves, one row per band")

    p = add("transform", cmd_transform, "continuum removal")
    p.add_argument("--method", default="sh", help="ch|sh")
    p.add_argument("--out", default="bd", choices=("raw", "bd", "ratio"))

    p = add("features", cmd_features, "absorption-feature segments", out_optional=True)
    p.add_argument("--anchors", required=True, help="comma-separated anchor nm")

    p = add("featprops", cmd_featprops, "absorption-feature properties",
            out_optional=True)
    p.add_argument("--anchors", required=True)

    p = add("index", cmd_index, "evaluate a spectral index", out_optional=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--name", help=f"one of: {', '.join(sorted(INDEX_CATALOG))}")
    group.add_argument("--expr", help='band math such as "(R800-R680)/(R800+R680)"')

    p = add("rededge", cmd_rededge, "red-edge position", out_optional=True)
    p.add_argument("--method", default="gaussian_fit", choices=RED_EDGE_METHODS)

    add("nri", cmd_nri, "all-pairs normalized ratio indices", out_optional=True)

    p = add("glm", cmd_glm, "per-pair GLM statistics over all NRI pairs")
    p.add_argument("--response", required=True)
    p.add_argument("--family", default="binomial", choices=("binomial", "gaussian"))

    p = add("correlogram", cmd_correlogram, "export a statistic grid from glm output")
    p.add_argument("--stat", default="p.value",
                   choices=("coefficient", "z.value", "p.value"))
    p.add_argument("--log", action="store_true", help="log10 color scale")
    p.add_argument("--pixmap", help="also write a PPM heatmap")

    p = add("rfe", cmd_rfe, "correlation-cutoff predictor filtering")
    p.add_argument("--response", required=True)
    p.add_argument("--predictors", default="", help="extra SI predictor columns")
    p.add_argument("--cutoff", type=float, default=0.9)

    p = add("export-ml", cmd_export_ml, "export response + predictor matrix")
    p.add_argument("--response", required=True)
    p.add_argument("--predictors", default="")

    p = add("unmix", cmd_unmix, "linear spectral unmixing", out_optional=True)
    p.add_argument("--endmembers", required=True)
    p.add_argument("--constraints", default="full", choices=CONSTRAINT_MODES)

    p = add("chunked", cmd_chunked, "stream a cube through row-local kernels")
    p.add_argument("--kernel", action="append", required=True,
                   help='kernel spec, e.g. "index --name NDVI" (repeatable)')
    p.add_argument("--target-mb", type=int, default=64)
    p.add_argument("--data-type", type=int, default=5, choices=(2, 4, 5, 12))
    p.add_argument("--interleave", default="bsq", choices=("bsq", "bil", "bip"))

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except (SpecwbError, OSError, ValueError, KeyError) as exc:
        print(f"specwb: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    raise SystemExit(main())
