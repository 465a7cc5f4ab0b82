import math

import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose

from common.exceptions import InputError, StabilityError
from common.formats import FieldGrid, Profile
from oracle.evolver import (
    ManufacturedSolution,
    compatibility_check,
    evolve,
    evolve_manufactured,
    explicit_spectral_radius,
    extend_left,
    extract_traces,
    one_sided_derivatives,
    rhs,
)
from spectral.lax_pair import closedness_residual, conservation_residual, convergence_ratio, zero_curvature_residual


class TestEvolve(SimpleTestCase):
    def test_zero_data_stay_zero(self):
        """Test that the zero profile evolves to the zero field"""
        field = evolve(Profile.zeros("x", 0.1, 50), 0.01, hy=1e-3)
        self.assertEqual((field.ny, field.nx), (11, 50))
        assert_allclose(field.samples, 0.0)

    def test_stride_keeps_every_level(self):
        """Test that the stride thins the stored y levels and scales hy"""
        field = evolve(Profile.zeros("x", 0.1, 50), 0.01, hy=1e-3, stride=5)
        self.assertEqual(field.ny, 3)
        self.assertAlmostEqual(field.hy, 5e-3)

    def test_stability_guard(self):
        """Test that a step above the explicit limit is refused with a usable suggestion"""
        x = 0.01 * np.arange(400)
        u0 = Profile(tag="x", h=0.01, samples=0.5 * np.exp(-(x - 2) ** 2))
        with self.assertRaises(StabilityError) as ctx:
            evolve(u0, 0.1, hy=0.1)
        suggested = ctx.exception.suggested_hy
        self.assertLess(suggested, 0.1)
        self.assertLessEqual(suggested * explicit_spectral_radius(0.5, 0.01), 0.5)
        self.assertEqual(ctx.exception.exit_code, 3)

    def test_bad_step_counts(self):
        """Test that L and the stride must fit the step"""
        u0 = Profile.zeros("x", 0.1, 50)
        with self.assertRaises(InputError):
            evolve(u0, 0.0105, hy=1e-3)
        with self.assertRaises(InputError):
            evolve(u0, 0.01, hy=1e-3, stride=3)

    def test_profile_requirements(self):
        """Test that only x-profiles with enough points evolve"""
        with self.assertRaises(InputError):
            evolve(Profile.zeros("y", 0.1, 50), 0.01, hy=1e-3)
        with self.assertRaises(InputError):
            evolve(Profile.zeros("x", 0.1, 5), 0.01, hy=1e-3)


class TestManufacturedSolution(SimpleTestCase):
    def setUp(self):
        """Set up test data"""
        self.solution = ManufacturedSolution()

    def test_jet_derivatives(self):
        """Test the closed-form x-derivatives against central differences"""
        x, h = np.linspace(2, 8, 7), 1e-4
        u, u_x, u_xx, _, u_y = self.solution.jet(x, 0.3)
        assert_allclose(u_x, (self.solution(x + h, 0.3) - self.solution(x - h, 0.3)) / (2 * h), atol=1e-8)
        _, u_x_plus, *_ = self.solution.jet(x + h, 0.3)
        _, u_x_minus, *_ = self.solution.jet(x - h, 0.3)
        assert_allclose(u_xx, (u_x_plus - u_x_minus) / (2 * h), atol=1e-8)
        assert_allclose(u_y, (self.solution(x, 0.3 + h) - self.solution(x, 0.3 - h)) / (2 * h), atol=1e-8)

    def test_forcing_closes_the_equation(self):
        """Test that u_y minus the equation's right-hand side is the forcing"""
        x = np.linspace(0, 10, 11)
        u, u_x, u_xx, u_xxx, u_y = self.solution.jet(x, 0.1)
        assert_allclose(u_y - rhs(u, u_x, u_xx, u_xxx), self.solution.forcing(x, 0.1), atol=1e-15)

    def test_error_decreases_under_refinement(self):
        """Test that halving hx and quartering hy cuts the error at y = L by about 2^4"""
        _, coarse = evolve_manufactured(self.solution, 16.0, 0.05, hx=0.1, hy=1e-3)
        field, fine = evolve_manufactured(self.solution, 16.0, 0.05, hx=0.05, hy=2.5e-4)
        self.assertLess(coarse, 1e-3)
        self.assertGreaterEqual(math.log2(coarse / fine), 3.2)
        self.assertEqual(field.metadata["scheme"], "cn-ab2")


class TestLaxResiduals(SimpleTestCase):
    def setUp(self):
        """Set up test data"""
        self.L = 0.02

    def evolved(self, hx, hy):
        x = hx * np.arange(int(round(8.0 / hx)) + 1)
        u0 = Profile(tag="x", h=hx, samples=0.05 * np.exp(-(x - 3) ** 2 + 0.5j * x))
        return evolve(u0, self.L, hy=hy)

    def test_second_order_ratios(self):
        """Test that halving both steps divides every residual by about four"""
        coarse, fine = self.evolved(0.1, 1e-3), self.evolved(0.05, 5e-4)
        for residual in (zero_curvature_residual, conservation_residual, closedness_residual):
            ratio = convergence_ratio(residual(coarse), residual(fine))
            self.assertGreaterEqual(ratio, 3.2, residual.__name__)
            self.assertLessEqual(ratio, 4.8, residual.__name__)

    def test_residuals_are_small(self):
        """Test that the oracle field satisfies the Lax-pair identities to discretization accuracy"""
        field = self.evolved(0.05, 5e-4)
        self.assertLess(conservation_residual(field), 1e-2)
        self.assertLess(closedness_residual(field), 1e-2)


class TestTraces(SimpleTestCase):
    def setUp(self):
        """Set up test data"""
        self.hx, self.hy = 0.1, 0.01
        x = self.hx * np.arange(12)
        y = self.hy * np.arange(6)
        c0 = 0.02 * (1 + y)
        c1, c2 = -0.01j, 0.005 + 0.001j
        self.field = FieldGrid(hx=self.hx, hy=self.hy, samples=c0[:, None] + c1 * x[None, :] + c2 * x[None, :] ** 2)
        self.c0, self.c1, self.c2 = c0, c1, c2

    def test_traces_of_a_quadratic(self):
        """Test that one-sided stencils recover exact traces of a quadratic in x"""
        traces = extract_traces(self.field)
        assert_allclose(traces.g0.samples, self.c0)
        assert_allclose(traces.g1.samples, self.c1, atol=1e-13)
        assert_allclose(traces.g2.samples, 2 * self.c2, atol=1e-11)
        np.testing.assert_array_equal(traces.u0.samples, self.field.samples[0])
        np.testing.assert_array_equal(traces.hL.samples, self.field.samples[-1])
        self.assertEqual((traces.g0.tag, traces.hL.tag), ("y", "x"))
        self.assertEqual(traces.g1.h, self.hy)

    def test_trace_grid_requirements(self):
        """Test that traces need six x-points and four y-levels"""
        with self.assertRaises(InputError):
            extract_traces(FieldGrid(hx=0.1, hy=0.1, samples=np.zeros((6, 5))))
        with self.assertRaises(InputError):
            extract_traces(FieldGrid(hx=0.1, hy=0.1, samples=np.zeros((3, 8))))

    def test_extension_matches_at_origin(self):
        """Test that the left extension continues the profile's Taylor data"""
        x = self.hx * np.arange(12)
        u0 = Profile(tag="x", h=self.hx, samples=0.02 + self.c1 * x + self.c2 * x ** 2)
        d1, d2 = one_sided_derivatives(u0.samples, u0.h)
        assert_allclose((d1, d2), (self.c1, 2 * self.c2), atol=1e-12)
        left = extend_left(u0, 10)
        self.assertEqual(left.size, 10)
        h = self.hx
        assert_allclose(left[-1], (0.02 - self.c1 * h + self.c2 * h ** 2) * np.exp(-h ** 4), atol=1e-13)

    def test_compatibility(self):
        """Test the corner residuals on zero data and on mismatched data"""
        zero_x, zero_y = Profile.zeros("x", 0.1, 10), Profile.zeros("y", 0.01, 10)
        report = compatibility_check(zero_x, zero_y, zero_y, zero_y)
        self.assertEqual(set(report), {"compatibility.g0", "compatibility.g1", "compatibility.g2",
                                       "compatibility.u_y"})
        self.assertTrue(all(value == 0 for value in report.values()))

        g0 = Profile(tag="y", h=0.01, samples=np.full(10, 0.05 + 0j))
        report = compatibility_check(zero_x, g0, zero_y, zero_y)
        self.assertAlmostEqual(report["compatibility.g0"], 0.05)
