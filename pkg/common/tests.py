import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose

from common.config import RunConfig, load_run_config, parse_config_lines
from common.exceptions import InputError, InvariantFailure, NumericalError, ParseError, StabilityError
from common.formats import (
    FieldGrid,
    Profile,
    atomic_write,
    dump_records,
    format_report,
    parse_report,
    read_field,
    read_profile,
    read_records,
    read_steps,
    write_field,
    write_profile,
)


class TestRunConfig(SimpleTestCase):
    def setUp(self):
        """Set up test data"""
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_defaults_come_from_settings(self):
        """Test that a bare configuration uses the settings defaults"""
        config = load_run_config()
        self.assertIsInstance(config, RunConfig)
        self.assertLessEqual(config.amplitude_guard, 0.5)
        self.assertGreater(config.nodes_per_ray, 0)

    def test_file_then_overrides(self):
        """Test that --set overrides win over the config file"""
        path = self.dir / "run.cfg"
        path.write_text("# desk run\nL = 0.05\n\nnodes_per_ray=16\n")
        config = load_run_config(path, ["nodes_per_ray=24"])
        self.assertEqual(config.L, 0.05)
        self.assertEqual(config.nodes_per_ray, 24)

    def test_unknown_key_reports_line(self):
        """Test that unknown keys are rejected with their line number"""
        with self.assertRaises(ParseError) as ctx:
            parse_config_lines(["L=0.1", "", "radius=3"], source="run.cfg")
        self.assertEqual(ctx.exception.line_number, 3)
        self.assertIn("run.cfg:3", str(ctx.exception))

    def test_amplitude_guard_bounded(self):
        """Test that an amplitude guard above 0.5 is an input error"""
        with self.assertRaises(InputError):
            load_run_config(overrides={"amplitude_guard": 0.8})

    def test_missing_config_file(self):
        """Test that a missing config file names the path"""
        with self.assertRaises(InputError) as ctx:
            load_run_config(self.dir / "absent.cfg")
        self.assertIn("absent.cfg", str(ctx.exception))


class TestExitCodes(SimpleTestCase):
    def test_exit_codes(self):
        """Test the exit code carried by each error family"""
        self.assertEqual(InvariantFailure("x").exit_code, 1)
        self.assertEqual(InputError("x").exit_code, 2)
        self.assertEqual(ParseError("f", 1, "bad").exit_code, 2)
        self.assertEqual(NumericalError("x").exit_code, 3)
        self.assertEqual(StabilityError("x", suggested_hy=1e-5).exit_code, 3)

    def test_details_in_message(self):
        """Test that error details are appended to the message"""
        error = StabilityError("unstable", suggested_hy=2.5e-5)
        self.assertEqual(error.suggested_hy, 2.5e-5)
        self.assertIn("suggested_hy=2.5e-05", str(error))


class TestFormats(SimpleTestCase):
    def setUp(self):
        """Set up test data"""
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)
        x = 0.1 * np.arange(12)
        self.profile = Profile(tag="x", h=0.1, samples=0.05 * np.exp(-x ** 2 + 1j * x))

    def tearDown(self):
        self.tmp.cleanup()

    def test_profile_file_is_exact(self):
        """Test that a written profile reads back bit for bit"""
        path = write_profile(self.dir / "u0.txt", self.profile)
        again = read_profile(path)
        self.assertEqual(again.tag, "x")
        self.assertEqual(again.h, self.profile.h)
        np.testing.assert_array_equal(again.samples, self.profile.samples)

    def test_field_file_is_exact(self):
        """Test that a written field reads back with its shape"""
        grid = FieldGrid(hx=0.1, hy=0.01, samples=np.arange(12).reshape(3, 4) * (1 + 2j))
        again = read_field(write_field(self.dir / "field.txt", grid))
        self.assertEqual((again.ny, again.nx), (3, 4))
        np.testing.assert_array_equal(again.samples, grid.samples)

    def test_malformed_line_number(self):
        """Test that a bad sample line is reported with its number"""
        path = self.dir / "bad.txt"
        path.write_text("# profile x h=0.1 n=4\n0 0\n1 0\nnot-a-number 0\n0 0\n")
        with self.assertRaises(ParseError) as ctx:
            read_profile(path)
        self.assertEqual(ctx.exception.line_number, 4)

    def test_sample_count_mismatch(self):
        """Test that the announced sample count is enforced"""
        path = self.dir / "short.txt"
        path.write_text("# profile y h=0.1 n=6\n0 0\n0 0\n0 0\n0 0\n")
        with self.assertRaises(ParseError):
            read_profile(path)

    def test_missing_file(self):
        """Test that a missing file is an input error naming the path"""
        with self.assertRaises(InputError) as ctx:
            read_profile(self.dir / "nowhere.txt")
        self.assertIn("nowhere.txt", str(ctx.exception))

    def test_profile_validation(self):
        """Test that profiles reject bad tags and non-finite samples"""
        with self.assertRaises(InputError):
            Profile(tag="z", h=0.1, samples=np.zeros(5))
        with self.assertRaises(InputError):
            Profile(tag="x", h=0.1, samples=np.array([0, 1, np.nan, 0, 0]))

    def test_records_and_steps(self):
        """Test the generic record format through a steps file"""
        text = dump_records("steps", {}, ["start", "end", "re_value", "im_value"], [(0.5, 1.0, 0.02, -0.01)])
        path = atomic_write(self.dir / "steps.txt", text)
        self.assertEqual(read_steps(path), [(0.5, 1.0, complex(0.02, -0.01))])
        metadata, columns, data = read_records(path, "steps")
        self.assertEqual(metadata, {})
        self.assertEqual(data.shape, (1, 4))

    def test_atomic_write_leaves_no_temporaries(self):
        """Test that atomic writes leave only the target behind"""
        atomic_write(self.dir / "out" / "a.txt", "first\n")
        atomic_write(self.dir / "out" / "a.txt", "second\n")
        self.assertEqual(sorted(p.name for p in (self.dir / "out").iterdir()), ["a.txt"])
        self.assertEqual((self.dir / "out" / "a.txt").read_text(), "second\n")

    def test_report_lines(self):
        """Test that reports are one key=value per line with complex values split"""
        text = format_report({"n": 3, "value": 0.25, "m": 1 + 2j, "ok": True})
        parsed = parse_report(text)
        self.assertEqual(parsed["n"], "3")
        self.assertEqual(parsed["ok"], "true")
        assert_allclose(float(parsed["m.im"]), 2.0)
        self.assertEqual(len(text.splitlines()), 5)
