"""CSV and ENVI round trips, interleaves, header parsing."""

import numpy as np
import pytest

from specwb import Speclib
from specwb.errors import FormatError
from specwb.spectral_io import (
    EnviHeader,
    parse_envi_header,
    read_csv_speclib,
    read_envi_cube,
    write_csv_speclib,
    write_envi_cube,
    write_envi_header,
)

from conftest import random_speclib, speclib_equal


class TestCsv:
    def test_minimal_file(self, tmp_path):
        path = tmp_path / "s.csv"
        path.write_text("400,500,600\n0.1,0.2,0.3\n")
        s = read_csv_speclib(path)
        assert s.n_spectra == 1 and s.n_bands == 3
        assert np.array_equal(s.values, [[0.1, 0.2, 0.3]])

    def test_si_columns_parsed(self, tmp_path):
        path = tmp_path / "s.csv"
        path.write_text("si:chlorophyll,400,500\n23.5,0.1,0.2\n31.0,0.3,0.4\n")
        s = read_csv_speclib(path)
        assert s.si.names == ["chlorophyll"]
        assert s.si.column("chlorophyll").kind == "numeric"
        assert s.n_bands == 2

    def test_text_si_column_kind(self, tmp_path):
        path = tmp_path / "s.csv"
        path.write_text("si:stage,400,500\nT0,0.1,0.2\nT2,0.3,0.4\n")
        assert read_csv_speclib(path).si.column("stage").kind == "categorical"

    def test_ragged_row_reports_line(self, tmp_path):
        path = tmp_path / "s.csv"
        path.write_text("400,500,600\n0.1,0.2,0.3\n0.1,0.2\n")
        with pytest.raises(FormatError, match="line 3"):
            read_csv_speclib(path)

    def test_bad_wavelength_header(self, tmp_path):
        path = tmp_path / "s.csv"
        path.write_text("400,oops,600\n0.1,0.2,0.3\n")
        with pytest.raises(FormatError, match="oops"):
            read_csv_speclib(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "s.csv"
        path.write_text("")
        with pytest.raises(FormatError, match="empty"):
            read_csv_speclib(path)

    def test_round_trip_random(self, rng, tmp_path):
        s = random_speclib(rng, n=5, bands=10)
        s = s.replace(si=s.si.with_column("chl", rng.uniform(10, 60, 5)))
        path = tmp_path / "s.csv"
        write_csv_speclib(s, path)
        assert speclib_equal(read_csv_speclib(path), s)

    def test_round_trip_preserves_custom_fwhm(self, rng, tmp_path):
        s = Speclib(rng.uniform(0, 1, (2, 4)), [400, 500, 600, 700], fwhm=[11, 12, 13, 14])
        path = tmp_path / "s.csv"
        write_csv_speclib(s, path)
        back = read_csv_speclib(path)
        assert np.array_equal(back.fwhm, s.fwhm)

    def test_no_si_prefix_when_empty(self, rng, tmp_path):
        path = tmp_path / "s.csv"
        write_csv_speclib(random_speclib(rng, n=2, bands=3), path)
        assert "si:" not in path.read_text()

    def test_write_subset_commutes_with_read(self, rng, tmp_path):
        s = random_speclib(rng, n=4, bands=20)
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_csv_speclib(s.subset_wavelength(600, 1800), p1)
        write_csv_speclib(s, p2)
        assert speclib_equal(
            read_csv_speclib(p1), read_csv_speclib(p2).subset_wavelength(600, 1800)
        )


class TestEnviHeader:
    def test_parse_case_and_braces(self, tmp_path):
        path = tmp_path / "c.hdr"
        path.write_text(
            "ENVI\nDescription = {two line\n description}\nSAMPLES = 3\nlines = 2\n"
            "Bands = 3\ndata type = 4\nInterleave = BSQ\nbyte order = 0\n"
            "wavelength = {400.0,\n 500.0, 600.0}\nmy custom = kept\n"
        )
        h = parse_envi_header(path)
        assert (h.samples, h.lines, h.bands) == (3, 2, 3)
        assert h.interleave == "bsq"
        assert np.array_equal(h.wavelength, [400, 500, 600])
        assert h.extra["my custom"] == "kept"

    def test_unknown_keys_survive_rewrite(self, tmp_path):
        src = tmp_path / "a.hdr"
        src.write_text(
            "ENVI\nsamples = 1\nlines = 1\nbands = 2\ndata type = 5\n"
            "interleave = bip\nbyte order = 0\nwavelength = {400, 500}\n"
            "sensor type = MySensor\n"
        )
        h = parse_envi_header(src)
        dst = tmp_path / "b.hdr"
        write_envi_header(h, dst)
        assert parse_envi_header(dst).extra["sensor type"] == "MySensor"

    def test_declared_nanometers_skips_unit_detection(self, tmp_path, rng):
        # sub-100 "wavelengths" (e.g. band indices) stay as written when the
        # header says Nanometers
        s = Speclib(rng.uniform(0, 1, (4, 2)), [1.0, 2.0])
        # constructor-level detection would scale these; write them raw
        data = tmp_path / "c.img"
        np.asarray(s.values.reshape(2, 2, 2)).tofile(data)
        (tmp_path / "c.img.hdr").write_text(
            "ENVI\nsamples = 2\nlines = 2\nbands = 2\ndata type = 5\n"
            "interleave = bip\nbyte order = 0\nwavelength units = Nanometers\n"
            "wavelength = {1, 2}\n"
        )
        assert np.array_equal(read_envi_cube(data).wavelength, [1.0, 2.0])

    def test_micrometer_units_converted(self, tmp_path):
        path = tmp_path / "c.hdr"
        path.write_text(
            "ENVI\nsamples = 1\nlines = 1\nbands = 2\ndata type = 5\n"
            "interleave = bip\nbyte order = 0\nwavelength units = Micrometers\n"
            "wavelength = {0.4, 0.5}\n"
        )
        assert np.array_equal(parse_envi_header(path).wavelength, [400.0, 500.0])

    def test_missing_required_field(self, tmp_path):
        path = tmp_path / "c.hdr"
        path.write_text("ENVI\nsamples = 1\nlines = 1\nbands = 2\n")
        with pytest.raises(FormatError, match="data type"):
            parse_envi_header(path)

    def test_unsupported_data_type(self):
        with pytest.raises(FormatError, match="data_type"):
            EnviHeader(samples=1, lines=1, bands=1, data_type=6)


class TestEnviCube:
    def _hand_cube(self, tmp_path):
        # 2x2x3 float32 BSQ cube with known bytes, built by hand
        values = np.arange(12, dtype=np.float32)  # band-major: b0: 0..3, b1: 4..7, b2: 8..11
        data = tmp_path / "cube.img"
        data.write_bytes(values.tobytes())
        hdr = tmp_path / "cube.img.hdr"
        hdr.write_text(
            "ENVI\nsamples = 2\nlines = 2\nbands = 3\ndata type = 4\n"
            "interleave = bsq\nbyte order = 0\nwavelength = {400, 500, 600}\n"
        )
        return data, hdr

    def test_hand_constructed_bsq(self, tmp_path):
        data, hdr = self._hand_cube(tmp_path)
        s = read_envi_cube(data, hdr)
        assert s.n_spectra == 4 and s.n_bands == 3
        # pixel (x=0, y=0) takes value k from band k's plane offset 0
        assert np.array_equal(s.values, [[0, 4, 8], [1, 5, 9], [2, 6, 10], [3, 7, 11]])
        assert np.array_equal(s.si.values("x"), [0, 1, 0, 1])
        assert np.array_equal(s.si.values("y"), [0, 0, 1, 1])

    @pytest.mark.parametrize("interleave", ["bsq", "bil", "bip"])
    def test_interleave_equivalence(self, interleave, rng, tmp_path):
        s = random_speclib(rng, n=12, bands=5)
        data = tmp_path / f"c_{interleave}.img"
        write_envi_cube(s, (4, 3), data, data_type=5, interleave=interleave)
        back = read_envi_cube(data)
        assert np.array_equal(back.values, s.values)
        assert np.array_equal(back.wavelength, s.wavelength)

    def test_float64_round_trip_bit_exact(self, rng, tmp_path):
        s = random_speclib(rng, n=6, bands=7)
        data = tmp_path / "c.img"
        write_envi_cube(s, (3, 2), data, data_type=5)
        assert np.array_equal(read_envi_cube(data).values, s.values)

    def test_float32_round_trip_precision(self, rng, tmp_path):
        s = random_speclib(rng, n=6, bands=7)
        data = tmp_path / "c.img"
        write_envi_cube(s, (3, 2), data, data_type=4)
        err = np.abs(read_envi_cube(data).values - s.values).max()
        assert err <= 1e-6 * np.abs(s.values).max()

    def test_uint16_counts(self, rng, tmp_path):
        vals = rng.integers(0, 400, (4, 3)).astype(float)
        s = Speclib(vals, [400, 500, 600], value_unit="counts")
        data = tmp_path / "c.img"
        write_envi_cube(s, (2, 2), data, data_type=12)
        back = read_envi_cube(data)
        assert back.value_unit == "counts"
        assert np.array_equal(back.values, vals)

    def test_big_endian_round_trip(self, rng, tmp_path):
        s = random_speclib(rng, n=4, bands=3)
        data = tmp_path / "c.img"
        write_envi_cube(s, (2, 2), data, data_type=5, byte_order=1)
        assert np.array_equal(read_envi_cube(data).values, s.values)

    def test_truncated_file_errors(self, tmp_path):
        data, hdr = self._hand_cube(tmp_path)
        data.write_bytes(data.read_bytes()[:-4])
        with pytest.raises(FormatError, match="size mismatch"):
            read_envi_cube(data, hdr)

    def test_missing_wavelength_errors(self, tmp_path):
        data, hdr = self._hand_cube(tmp_path)
        hdr.write_text(
            "ENVI\nsamples = 2\nlines = 2\nbands = 3\ndata type = 4\n"
            "interleave = bsq\nbyte order = 0\n"
        )
        with pytest.raises(FormatError, match="wavelength"):
            read_envi_cube(data, hdr)

    def test_row_count_mismatch_on_write(self, rng, tmp_path):
        s = random_speclib(rng, n=5, bands=3)
        with pytest.raises(Exception, match="row-count mismatch"):
            write_envi_cube(s, (2, 2), tmp_path / "c.img")
