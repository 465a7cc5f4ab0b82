import tempfile
from io import StringIO
from pathlib import Path

import numpy as np
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import TestCase
from numpy.testing import assert_allclose

from common.formats import Profile, parse_report, read_field, read_profile, write_profile
from pipeline.models import PipelineRun, RunStatus
from spectral.analysis import Pole, ResidueData
from spectral.direct import SpectralTable

SMALL_RUN = [
    "--set", "truncation_radius=2",
    "--set", "nodes_per_ray=8",
    "--set", "L=0.05",
    "--set", "x_max=5",
]


class PipelineCommandTestCase(TestCase):
    def setUp(self):
        """Set up test data"""
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)
        self.out = self.dir / "out"
        self.u0 = write_profile(self.dir / "u0.txt", Profile.zeros("x", 0.1, 51))
        self.g = [write_profile(self.dir / f"g{k}.txt", Profile.zeros("y", 0.01, 6)) for k in range(3)]

    def tearDown(self):
        self.tmp.cleanup()

    def run_command(self, name, *args):
        stdout = StringIO()
        call_command(name, *SMALL_RUN, "--output-dir", str(self.out), *args, stdout=stdout)
        return parse_report(stdout.getvalue())

    def run_failing(self, name, *args):
        with self.assertRaises(CommandError) as ctx:
            self.run_command(name, *args)
        return ctx.exception

    def trivial_tables(self):
        self.run_command("scatter", str(self.u0))
        self.run_command("boundary_scatter", *map(str, self.g))
        return [str(self.out / "spectral_ab.txt"), str(self.out / "spectral_AB.txt")]


class TestScatterCommands(PipelineCommandTestCase):
    def test_scatter_zero_profile(self):
        """Test that scatter tabulates a = 1 and b = 0 for zero initial data"""
        report = self.run_command("scatter", str(self.u0))
        table = SpectralTable.read(self.out / "spectral_ab.txt")
        a, b = table.column("a"), table.column("b")
        assert_allclose(a[np.isfinite(a)], 1.0, atol=1e-12)
        assert_allclose(b[np.isfinite(b)], 0.0, atol=1e-12)
        self.assertEqual(report["output.spectral_ab.txt"], str(self.out / "spectral_ab.txt"))
        self.assertEqual(int(report["scatter.samples"]), table.lam.size)

        run = PipelineRun.objects.get(command="scatter")
        self.assertEqual(run.status, RunStatus.SUCCEEDED)
        self.assertEqual(run.exit_code, 0)
        self.assertEqual(run.config["nodes_per_ray"], 8)

    def test_missing_profile(self):
        """Test that a missing input file exits with code 2 and names the path"""
        error = self.run_failing("scatter", str(self.dir / "absent.txt"))
        self.assertEqual(error.returncode, 2)
        self.assertIn("absent.txt", str(error))
        run = PipelineRun.objects.get(command="scatter")
        self.assertEqual((run.status, run.exit_code), (RunStatus.FAILED, 2))

    def test_amplitude_guard(self):
        """Test that data above the amplitude guard is rejected as bad input"""
        loud = write_profile(self.dir / "loud.txt", Profile(tag="x", h=0.1, samples=np.full(51, 0.2 + 0j)))
        error = self.run_failing("scatter", str(loud), "--set", "amplitude_guard=0.1")
        self.assertEqual(error.returncode, 2)

    def test_boundary_grid_mismatch(self):
        """Test that boundary profiles of different lengths exit with code 2"""
        short = write_profile(self.dir / "short.txt", Profile.zeros("y", 0.01, 5))
        error = self.run_failing("boundary_scatter", str(self.g[0]), str(self.g[1]), str(short))
        self.assertEqual(error.returncode, 2)
        self.assertIn("mismatched", str(error))

    def test_boundary_length_must_match(self):
        """Test that an explicit L must agree with the data grid"""
        error = self.run_failing("boundary_scatter", *map(str, self.g), "--L", "0.2")
        self.assertEqual(error.returncode, 2)

    def test_unknown_config_key(self):
        """Test that an unknown --set key is bad input"""
        error = self.run_failing("scatter", str(self.u0), "--set", "radius=3")
        self.assertEqual(error.returncode, 2)


class TestValidateCommand(PipelineCommandTestCase):
    def test_trivial_tables_pass(self):
        """Test that tables of zero data pass every check"""
        tables = self.trivial_tables()
        report = self.run_command("validate", *tables, "--u0", str(self.u0))
        self.assertEqual(report["validate.status"], "pass")
        for check in ("det_s1", "det_s2", "det_s3", "parity.table", "global_relation"):
            self.assertEqual(report[f"validate.{check}.status"], "pass", check)
        self.assertEqual(report["validate.jump.principal.det.status"], "pass")
        self.assertEqual(report["validate.parity.ab.status"], "pass")
        run = PipelineRun.objects.get(command="validate")
        self.assertEqual(run.status, RunStatus.SUCCEEDED)
        self.assertEqual(run.summary["validate.status"], "pass")

    def test_incompatible_data_fail(self):
        """Test that boundary data unrelated to the initial data fail with code 1"""
        self.run_command("scatter", str(self.u0))
        g0 = write_profile(self.dir / "g0_loud.txt", Profile(tag="y", h=0.01, samples=np.full(6, 0.05 + 0j)))
        self.run_command("boundary_scatter", str(g0), str(self.g[1]), str(self.g[2]))
        error = self.run_failing("validate", str(self.out / "spectral_ab.txt"), str(self.out / "spectral_AB.txt"))
        self.assertEqual(error.returncode, 1)
        run = PipelineRun.objects.get(command="validate")
        self.assertEqual((run.status, run.exit_code), (RunStatus.FAILED, 1))
        self.assertIn("failed checks", run.error)
        self.assertIn("global_relation", run.error)

    def test_parity_runs_without_profiles(self):
        """Test that the table parity check runs when no profile or boundary files are given"""
        tables = self.trivial_tables()
        report = self.run_command("validate", *tables)
        self.assertEqual(report["validate.parity.table.status"], "pass")
        self.assertNotIn("validate.parity.ab", report)
        self.assertEqual(report["validate.status"], "pass")

    def test_partial_boundary_options(self):
        """Test that boundary files must come as a complete triple"""
        tables = self.trivial_tables()
        error = self.run_failing("validate", *tables, "--g0", str(self.g[0]))
        self.assertEqual(error.returncode, 2)


class TestZerosAndSolveCommands(PipelineCommandTestCase):
    def test_zeros_of_trivial_data(self):
        """Test that zero data have no zeros and empty residue files"""
        tables = self.trivial_tables()
        report = self.run_command(
            "zeros", *tables, "--u0", str(self.u0),
            "--g0", str(self.g[0]), "--g1", str(self.g[1]), "--g2", str(self.g[2]),
        )
        self.assertEqual(int(report["zeros.a.count"]), 0)
        self.assertEqual(int(report["zeros.alpha.count"]), 0)
        self.assertEqual(report["zeros.a.certified"], "true")
        for context in ("principal", "x", "y", "L"):
            residues = ResidueData.read(self.out / f"residues_{context}.txt")
            self.assertEqual((residues.context, len(residues)), (context, 0))

    def test_solve_trivial_principal(self):
        """Test that the principal problem of zero data reconstructs the zero field"""
        tables = self.trivial_tables()
        report = self.run_command("solve", *tables, "--x", "0", "0.1", "0.2", "--y", "0")
        self.assertEqual(int(report["solve.points"]), 3)
        self.assertLess(float(report["reconstruct.u.max_abs"]), 1e-12)
        self.assertTrue((self.out / "solution_principal.txt").exists())
        self.assertTrue((self.out / "u_reconstructed.txt").exists())

    def test_solve_x_problem_with_reference(self):
        """Test the x-problem against a zero reference profile"""
        tables = self.trivial_tables()
        report = self.run_command("solve", *tables, "--problem", "x", "--x", "0", "0.1", "0.2",
                                  "--reference", str(self.u0))
        self.assertLess(float(report["reconstruct.relative_error"]), 1e-12)
        self.assertEqual(read_profile(self.out / "u0_reconstructed.txt").n, 3)

    def test_residue_context_mismatch(self):
        """Test that residues written for another problem are refused"""
        tables = self.trivial_tables()
        path = self.dir / "residues.txt"
        path.write_text(ResidueData("x", [Pole(0.8 + 0.9j, 2, 0.01, -1)]).dump())
        error = self.run_failing("solve", *tables, "--fixture-residues", str(path))
        self.assertEqual(error.returncode, 2)

    def test_non_uniform_grid(self):
        """Test that reconstruction grids must be uniform"""
        tables = self.trivial_tables()
        error = self.run_failing("solve", *tables, "--x", "0", "0.1", "0.3")
        self.assertEqual(error.returncode, 2)


class TestOracleCommands(PipelineCommandTestCase):
    def test_oracle_needs_a_profile(self):
        """Test that the oracle without a profile or --manufactured exits with code 2"""
        error = self.run_failing("oracle")
        self.assertEqual(error.returncode, 2)

    def test_oracle_then_traces(self):
        """Test that traces of an evolved zero profile are zero and compatible"""
        report = self.run_command("oracle", str(self.u0), "--set", "L=0.01", "--set", "hy=0.001")
        field = read_field(self.out / "field.txt")
        self.assertEqual((field.ny, field.nx), (11, 51))
        self.assertEqual(int(report["oracle.ny"]), 11)

        report = self.run_command("traces", str(self.out / "field.txt"))
        for name in ("u0", "g0", "g1", "g2", "hL"):
            self.assertTrue((self.out / f"{name}.txt").exists())
        self.assertEqual(float(report["compatibility.g0"]), 0.0)
        self.assertEqual(read_profile(self.out / "g0.txt").tag, "y")

    def test_manufactured_levels(self):
        """Test that a convergence table needs two levels at least"""
        error = self.run_failing("oracle", "--manufactured", "--levels", "1")
        self.assertEqual(error.returncode, 2)
