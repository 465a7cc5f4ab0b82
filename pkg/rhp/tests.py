import cmath
import math

import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose
from scipy.integrate import quad

from common.exceptions import InputError, NumericalError, SingularJumpError
from common.formats import Profile
from oracle.evolver import evolve, extract_traces
from rhp.jumps import (
    FAMILIES,
    FAMILY_INPUTS,
    JumpAssembly,
    assemble_jump,
    build_assembly,
    composite_J4,
    family_matrix,
    spectral_values,
)
from rhp.reconstruction import (
    _fixed_point,
    boundary_gauge,
    consistency_gradient,
    gauge_integral,
    reconstruct_boundary,
    reconstruct_hL,
    reconstruct_u,
)
from rhp.solver import cauchy_minus_matrix, extract_coefficients, principal_value_integrals, solve_rhp
from spectral.analysis import Pole, ResidueData
from spectral.contour import NUM_RAYS, build_contour
from spectral.direct import BoundaryData, sample_set, tabulate_AB, tabulate_ab


def bump(r):
    return 0.3 * np.exp(-((r - 2.0) ** 2) / 0.05)


def scalar_jump(contour, x, y):
    """diag(d, 1/d) with log d a bump centred on r = 2."""
    d = np.exp(bump(np.abs(contour.flat_nodes())))
    J = np.zeros((contour.size, 2, 2), dtype=complex)
    J[:, 0, 0] = d
    J[:, 1, 1] = 1 / d
    return J


def identity_jump(contour, x, y):
    return np.broadcast_to(np.eye(2, dtype=complex), (contour.size, 2, 2))


def synthetic_table(contour, L=0.05, trivial=False):
    """Analytic scattering entries with the right parities and unit determinants, tabulated on the contour."""
    table = sample_set(contour, interior=False)
    lam = table.lam
    lam2, lam4 = lam ** 2, lam ** 4
    if trivial:
        ones, zeros = np.ones_like(lam), np.zeros_like(lam)
        table.columns.update({"a": ones, "b": zeros, "a_hat": ones.copy(), "b_hat": zeros.copy(),
                              "A": ones.copy(), "B": zeros.copy(), "A_hat": ones.copy(), "B_hat": zeros.copy()})
    else:
        a, b, b_hat = 1 + 0.1 * lam2 / (lam4 + 1), 0.1 * lam / (lam4 + 1), 0.08 * lam / (lam4 + 1.5)
        A, B, B_hat = 1 + 0.05 * lam2 / (lam4 + 2), 0.05 * lam ** 3 / (lam4 + 2), 0.04 * lam ** 3 / (lam4 + 3)
        table.columns.update({
            "a": a, "b": b, "a_hat": (1 + b * b_hat) / a, "b_hat": b_hat,
            "A": A, "B": B, "A_hat": (1 + B * B_hat) / A, "B_hat": B_hat,
        })
    table.metadata["L"] = L
    return table


def decaying_profile(amplitude=0.05, center=3.0, h=0.05, x_max=8.0):
    n = int(round(x_max / h)) + 1
    x = h * np.arange(n)
    return Profile(tag="x", h=h, samples=amplitude * np.exp(-(x - center) ** 2 + 0.5j * x))


def shrinking_limit(f, zeta, eps=1e-5):
    """Mean of (lam - zeta) f(lam) over four points at distance eps from zeta."""
    offsets = eps * np.array([1, -1, 1j, -1j])
    return np.mean([d * f(zeta + d) for d in offsets], axis=0)


def window(y, L):
    """sin^2 bump vanishing with its slope at y = 0 and y = L."""
    return np.sin(math.pi * y / L) ** 2


def relative_error(reconstructed, reference):
    return float(np.max(np.abs(reconstructed - reference)) / np.max(np.abs(reference)))


class TestScalarProblem(SimpleTestCase):
    def setUp(self):
        """Set up test data"""
        self.radius = 3.0
        self.contour = build_contour(self.radius, 128).restrict((0,))
        self.solution = solve_rhp(JumpAssembly.from_function(self.contour, scalar_jump), None, 0.0, 0.0)

    def cauchy_exponent(self, lam):
        """(1/2 pi i) int_0^R log d(s) / (s - lam) ds"""
        re = quad(lambda s: (bump(s) / (s - lam)).real, 0, self.radius, points=[2.0], limit=200)[0]
        im = quad(lambda s: (bump(s) / (s - lam)).imag, 0, self.radius, points=[2.0], limit=200)[0]
        return (re + 1j * im) / (2j * math.pi)

    def test_first_coefficient(self):
        """Test that m1_11 equals minus the scaled integral of log d"""
        integral = quad(bump, 0, self.radius, points=[2.0])[0]
        m1 = self.solution.coefficient(1)
        assert_allclose(m1[0, 0], -integral / (2j * math.pi), atol=1e-6)
        assert_allclose(m1[1, 1], -m1[0, 0], atol=1e-6)
        assert_allclose(m1[0, 1], 0.0, atol=1e-12)

    def test_off_contour_values(self):
        """Test M11 against the exponential of the Cauchy integral and M22 = 1/M11"""
        point = 1.0 + 1.0j
        M = self.solution.evaluate([point])[0]
        assert_allclose(M[0, 0], cmath.exp(self.cauchy_exponent(point)), atol=1e-6)
        assert_allclose(M[1, 1] * M[0, 0], 1.0, atol=1e-6)

    def test_boundary_values_jump(self):
        """Test that the computed boundary values satisfy M+ = M- J"""
        J = scalar_jump(self.contour, 0.0, 0.0)
        assert_allclose(self.solution.plus, self.solution.minus @ J, atol=1e-12)
        self.assertLess(self.solution.det_defect, 1e-6)

    def test_refinement(self):
        """Test that doubling the nodes shrinks the change in m1 at least fourfold"""
        values = []
        for n in (32, 64, 128):
            contour = build_contour(self.radius, n).restrict((0,))
            solution = solve_rhp(JumpAssembly.from_function(contour, scalar_jump), None, 0.0, 0.0)
            values.append(solution.coefficient(1)[0, 0])
        self.assertGreater(abs(values[0] - values[1]), 4 * abs(values[1] - values[2]))


class TestCauchyMatrix(SimpleTestCase):
    def test_constant_density(self):
        """Test that a constant density reproduces the principal value exactly"""
        contour = build_contour(2.0, 16)
        C = cauchy_minus_matrix(contour)
        expected = principal_value_integrals(contour) / (2j * math.pi) - 0.5
        assert_allclose(C @ np.ones(contour.size), expected, atol=1e-10)


class TestJumps(SimpleTestCase):
    def setUp(self):
        """Set up test data"""
        self.contour = build_contour(2.0, 8)
        self.table = synthetic_table(self.contour)
        self.x, self.y = 0.3, 0.01

    def test_unit_determinant(self):
        """Test that every family has unit-determinant jumps"""
        for family in FAMILIES:
            assembly = build_assembly(family, self.table)
            self.assertLess(assembly.determinant_defect(self.x, self.y), 1e-12, family)

    def test_restricted_rays(self):
        """Test that the restricted problems live on the axes"""
        self.assertEqual(build_assembly("x", self.table).contour.rays, (0, 3, 6, 9))
        self.assertEqual(build_assembly("L", self.table).contour.rays, (0, 3, 6, 9))
        self.assertEqual(build_assembly("y", self.table).contour.num_rays, NUM_RAYS)

    def test_composite_crossing(self):
        """Test the composite jump against the product of the jumps it replaces"""
        table = build_assembly("principal", self.table).table
        idx = table.on_ray(0)
        values = spectral_values(table, FAMILY_INPUTS["principal"], idx)
        lam = table.lam[idx]
        crossing = (family_matrix("principal", 2, values, lam, self.x, self.y)
                    @ family_matrix("principal", 3, values, lam, self.x, self.y)
                    @ family_matrix("principal", 4, values, lam, self.x, self.y))
        assert_allclose(composite_J4(values, lam, self.x, self.y), crossing, atol=1e-12)

    def test_single_point_matches_assembly(self):
        """Test that assemble_jump at a node agrees with the assembled block"""
        assembly = build_assembly("principal", self.table)
        lam = self.contour.nodes[5, 3]
        J = assembly.evaluate(self.x, self.y).reshape(NUM_RAYS, -1, 2, 2)[5, 3]
        assert_allclose(assemble_jump("principal", self.table, self.x, self.y, lam), J, atol=1e-12)

    def test_singular_denominator(self):
        """Test that a vanishing a is reported as a singular jump"""
        table = synthetic_table(self.contour)
        table.columns["a"] = np.where(table.ray_or_sector == 0, 0.0, table.columns["a"])
        with self.assertRaises(SingularJumpError):
            build_assembly("x", table).evaluate(self.x, 0.0)

    def test_missing_values(self):
        """Test that a table without boundary functions cannot feed the y-problem"""
        table = synthetic_table(self.contour)
        del table.columns["B"]
        with self.assertRaises(InputError):
            build_assembly("y", table)

    def test_wrong_family_ray(self):
        """Test that a restricted family refuses off-axis rays"""
        with self.assertRaises(InputError):
            family_matrix("x", 1, {}, np.array([1.0]), 0.0, 0.0)


class TestSolver(SimpleTestCase):
    def test_trivial_tables_give_identity(self):
        """Test that zero data give identity jumps and vanishing coefficients"""
        table = synthetic_table(build_contour(2.0, 8), trivial=True)
        for family in FAMILIES:
            assembly = build_assembly(family, table)
            assert_allclose(assembly.evaluate(0.2, 0.01), np.eye(2)[None], atol=1e-14)
            solution = solve_rhp(assembly, None, 0.2, 0.01)
            for m in extract_coefficients(solution):
                assert_allclose(m, 0.0, atol=1e-14)
            self.assertLess(solution.normalization_defect, 1e-14)

    def test_pole_conditions(self):
        """Test that solved pole matrices satisfy their residue conditions"""
        contour = build_contour(2.0, 8).restrict((0, 3, 6, 9))
        residues = ResidueData("x", [Pole(0.8 + 0.9j, 2, 0.3 - 0.1j, -1), Pole(0.8 - 0.9j, 1, -0.2 + 0.05j, 1)])
        x, y = 0.4, 0.0
        solution = solve_rhp(JumpAssembly.from_function(contour, identity_jump), residues, x, y)
        for p, R in zip(residues.poles, solution.pole_matrices):
            other = 2 - p.column
            expected = np.eye(2)[:, other].astype(complex)
            for q, S in zip(residues.poles, solution.pole_matrices):
                if q is not p:
                    expected = expected + S[:, other] / (p.location - q.location)
            assert_allclose(R[:, p.column - 1], p.factor(x, y) * expected, atol=1e-12)

    def test_residues_as_limits(self):
        """Test that (lam - p) M tends to the pole column and that column is factor times the regular one"""
        contour = build_contour(3.0, 32).restrict((0, 3, 6, 9))
        residues = ResidueData("x", [Pole(0.7 + 0.6j, 2, 0.25 + 0.1j, -1), Pole(-1.1 - 0.4j, 1, -0.15j, 1)])
        x = 0.6
        solution = solve_rhp(JumpAssembly.from_function(contour, scalar_jump), residues, x, 0.0)
        offsets = 1e-5 * np.array([1, -1, 1j, -1j])
        for pole in residues.poles:
            column, other = pole.column - 1, 2 - pole.column
            residue = shrinking_limit(lambda lam: solution.evaluate([lam])[0][:, column], pole.location)
            regular = np.mean(solution.evaluate(pole.location + offsets)[:, :, other], axis=0)
            self.assertGreater(np.abs(residue).max(), 1e-3)
            assert_allclose(residue, pole.factor(x, 0.0) * regular, rtol=1e-6, atol=1e-9)
            assert_allclose(residue, solution.pole_matrices[residues.poles.index(pole)][:, column], atol=1e-9)

    def test_pole_on_contour(self):
        """Test that a pole sitting on a ray is rejected"""
        contour = build_contour(2.0, 8).restrict((0,))
        residues = ResidueData("x", [Pole(1.0 + 0j, 2, 0.1, -1)])
        with self.assertRaises(InputError):
            solve_rhp(JumpAssembly.from_function(contour, identity_jump), residues, 0.0, 0.0)

    def test_coefficient_order(self):
        """Test that only orders 1 to 5 are available"""
        contour = build_contour(2.0, 8).restrict((0,))
        solution = solve_rhp(JumpAssembly.from_function(contour, identity_jump), None, 0.0, 0.0)
        with self.assertRaises(InputError):
            solution.coefficient(6)
        with self.assertRaises(InputError):
            extract_coefficients(solution, 0)


class TestReconstruction(SimpleTestCase):
    def setUp(self):
        """Set up test data"""
        self.hx = 0.05
        self.x = self.hx * np.arange(81)

    def test_zero_coefficient(self):
        """Test that a vanishing coefficient reconstructs the zero field"""
        field = reconstruct_u(np.zeros((1, 20)), self.hx)
        assert_allclose(field.u, 0.0)
        self.assertEqual(field.iterations, 1)

    def test_fixed_point_is_consistent(self):
        """Test that the reconstructed field reproduces itself through its own gauge"""
        m = 0.01 * np.exp(-self.x ** 2) * (1 + 0.5j)
        field = reconstruct_u(m, self.hx)
        again = 2j * m * np.exp(2j * gauge_integral(field.u, self.hx, 1.0))
        assert_allclose(field.u, again, atol=1e-9)
        self.assertLess(field.modulus_drift, 1e-10)
        self.assertEqual(field.as_field().nx, self.x.size)

    def test_gauge_of_constant_field(self):
        """Test the gauge integral of a constant field along x"""
        gauge = gauge_integral(np.full((1, 11), 0.2 + 0j), 0.1, 1.0)
        assert_allclose(gauge[0], 0.1 * 0.1 * np.arange(11), atol=1e-15)

    def test_divergent_iteration(self):
        """Test that a fixed-point iteration without a limit raises"""
        with self.assertRaises(NumericalError):
            _fixed_point(lambda state: [2 * state[0] + 1.0], [np.zeros(3)], "test")
        with self.assertRaises(NumericalError):
            _fixed_point(lambda state: [np.full(3, np.inf)], [np.zeros(3)], "test")

    def test_boundary_reconstruction(self):
        """Test that zero y-problem coefficients give zero boundary data"""
        g0, g1, g2 = reconstruct_boundary(np.zeros((6, 5, 2, 2)), 0.01)
        for g in (g0, g1, g2):
            self.assertEqual(g.tag, "y")
            assert_allclose(g.samples, 0.0)
        self.assertEqual(boundary_gauge(g0, g1, g2), 0)
        with self.assertRaises(InputError):
            reconstruct_boundary(np.zeros((6, 3, 2, 2)), 0.01)

    def test_boundary_first_order(self):
        """Test that g0 is 2i m12 when the gauge vanishes"""
        coefficients = np.zeros((6, 5, 2, 2), dtype=complex)
        coefficients[:, 0, 0, 1] = 1e-3
        g0, _, _ = reconstruct_boundary(coefficients, 0.01)
        assert_allclose(g0.samples[0], 2e-3j, atol=1e-15)

    def test_final_line(self):
        """Test u(x, L) from the L-problem coefficient"""
        h = reconstruct_hL(np.zeros(12), 0.1)
        self.assertEqual(h.tag, "x")
        assert_allclose(h.samples, 0.0)
        m_L = 1e-3 * np.ones(12)
        h = reconstruct_hL(m_L, 0.1, boundary_phase=0.25)
        assert_allclose(h.samples[0], 2e-3j * cmath.exp(0.5j), atol=1e-15)

    def test_consistency_gradient_needs_a_grid(self):
        """Test that the gradient diagnostic reports NaN on a single row"""
        self.assertTrue(math.isnan(consistency_gradient(np.zeros((1, 5)), np.zeros((1, 5)), 0.1, 0.1)))
        self.assertEqual(consistency_gradient(np.zeros((4, 5)), np.zeros((4, 5)), 0.1, 0.1), 0.0)


class TestRoundTrip(SimpleTestCase):
    """Scatter oracle data, solve the RHP and reconstruct what went in."""

    def setUp(self):
        """Set up test data"""
        self.u0 = decaying_profile()
        self.axes = sample_set(build_contour(3.0, 96).restrict((0, 3, 6, 9)), interior=False)
        self.xs = 0.1 * np.arange(61)

    def solve_along_x(self, assembly, y):
        C = cauchy_minus_matrix(assembly.contour)
        solutions = [solve_rhp(assembly, None, float(x), y, C) for x in self.xs]
        for s in solutions:
            self.assertLess(s.det_defect, 1e-6)
        return np.array([s.coefficient(1)[0, 1] for s in solutions])

    def test_initial_profile(self):
        """Test that the x-problem reconstructs u(x, 0) from tabulated a, b"""
        table = tabulate_ab(self.u0, self.axes)
        m12 = self.solve_along_x(build_assembly("x", table), 0.0)

        u = reconstruct_u(m12[None, :], 0.1).u[0]

        self.assertLessEqual(relative_error(u, self.u0.samples[::2][:61]), 1e-3)

    def test_final_line(self):
        """Test that the L-problem reconstructs the oracle's u(x, L)"""
        L = 0.05
        traces = extract_traces(evolve(self.u0, L, hy=5e-4, stride=10))
        data = BoundaryData(traces.g0, traces.g1, traces.g2)
        table = tabulate_ab(self.u0, self.axes).merge(tabulate_AB(data, self.axes))
        m12 = self.solve_along_x(build_assembly("L", table), L)

        hL = reconstruct_hL(m12, 0.1, boundary_gauge(data.g0, data.g1, data.g2))

        self.assertLessEqual(relative_error(hL.samples, traces.hL.samples[::2][:61]), 1e-3)

    def test_boundary_values(self):
        """Test that the y-problem reconstructs g0 from tabulated A, B"""
        L, n = 0.05, 21
        h = L / (n - 1)
        data = BoundaryData(
            Profile.sample(lambda y: 0.05 * window(y, L) * np.exp(20j * y), "y", h, n),
            Profile.sample(lambda y: 0.02j * window(y, L), "y", h, n),
            Profile.sample(lambda y: -0.01 * window(y, L) * np.cos(40 * y), "y", h, n),
        )
        table = tabulate_AB(data, sample_set(build_contour(3.0, 96), interior=False))
        assembly = build_assembly("y", table)
        C = cauchy_minus_matrix(assembly.contour)
        solutions = [solve_rhp(assembly, None, 0.0, float(y), C) for y in data.g0.grid]
        for s in solutions:
            self.assertLess(s.det_defect, 1e-6)
        coefficients = np.array([extract_coefficients(s, 5) for s in solutions])

        g0, _, _ = reconstruct_boundary(coefficients, h)

        self.assertLessEqual(relative_error(g0.samples, data.g0.samples), 1e-3)
