import cmath
import math
import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase, override_settings
from numpy.testing import assert_allclose

from common.config import load_run_config
from common.exceptions import InputError, NumericalError
from common.formats import FieldGrid, Profile, atomic_write
from fokas_lab.celery import celery_app
from oracle.evolver import evolve, extract_traces, rhs
from spectral.analysis import (
    Pole,
    ResidueData,
    ZeroSet,
    derive_alpha_beta,
    far_field_certificate,
    find_zeros,
    global_relation_residual,
    residue_data,
    sector_region,
    winding_count,
    with_negatives,
)
from spectral.contour import NUM_RAYS, SECTORS, build_contour, classify, ray_sign_regions, theta
from spectral.direct import (
    BoundaryData,
    SpectralTable,
    compute_AB,
    compute_ab,
    compute_ab_hat,
    compute_s1,
    integrate_mu_x,
    oracle_ab_piecewise_constant,
    oracle_s1_piecewise_constant,
    sample_set,
    tabulate_AB,
    tabulate_ab,
)
from spectral.lax_pair import (
    SIGMA3,
    FieldJet,
    assemble_N1,
    assemble_N2,
    assemble_U,
    assemble_V,
    closedness_residual,
    conservation_residual,
    convergence_ratio,
    delta_one_form,
)


def gaussian_profile(amplitude=0.05, center=3.0, h=0.05, x_max=10.0):
    n = int(round(x_max / h)) + 1
    x = h * np.arange(n)
    return Profile(tag="x", h=h, samples=amplitude * np.exp(-(x - center) ** 2 + 0.5j * x))


def first_quadrant(count, radius=2.0):
    """Points with Im lam^2 >= 0 off the rays."""
    r = np.linspace(0.3, radius, count)
    phi = np.linspace(0.1, 1.45, count)
    return r * np.exp(1j * phi)


class TestContour(SimpleTestCase):
    def test_classify_rays_and_sectors(self):
        """Test that points are assigned to a ray or a sector"""
        self.assertEqual(classify(2.0).ray, 0)
        self.assertEqual(classify(1j).ray, 3)
        self.assertEqual(classify(cmath.exp(1j * 7 * math.pi / 6)).ray, 7)
        self.assertEqual(classify(cmath.exp(1j * math.pi / 12)).sector, 1)
        self.assertEqual(classify(cmath.exp(1j * 9 * math.pi / 12)).sector, 5)
        # sectors repeat with period pi
        self.assertEqual(classify(-cmath.exp(1j * math.pi / 12)).sector, 1)

    def test_origin_is_rejected(self):
        """Test that the origin cannot be classified"""
        with self.assertRaises(InputError):
            classify(0)

    def test_sectors_cover_half_plane(self):
        """Test that every sector contains its own bisector"""
        for sector in SECTORS:
            bisector = cmath.exp(1j * sum(sector.arg_range) / 2)
            self.assertTrue(sector.contains(bisector))
            self.assertEqual(classify(bisector).sector, sector.index)

    def test_quadrature_integrates_polynomials(self):
        """Test that the ray weights integrate smooth functions along each ray"""
        contour = build_contour(3.0, 32)
        self.assertEqual(contour.size, NUM_RAYS * 32)
        assert_allclose(contour.weights.sum(), 3.0, rtol=1e-13)
        assert_allclose(np.sum(contour.weights * contour.radii ** 3), 3.0 ** 4 / 4, rtol=1e-12)
        # complex weights carry the ray direction
        assert_allclose(contour.dlam[3].sum(), 3.0j, rtol=1e-13)

    def test_restrict_keeps_layout(self):
        """Test that a restricted contour keeps the radial nodes"""
        contour = build_contour(2.0, 16)
        sub = contour.restrict((0, 3, 6, 9))
        self.assertEqual(sub.num_rays, 4)
        assert_allclose(sub.nodes[1], 1j * contour.radii)

    def test_theta_on_rays(self):
        """Test that on the boundary x = 0 the phase exp(2i theta) has unit modulus on every ray"""
        contour = build_contour(2.0, 16)
        lam = contour.flat_nodes()
        assert_allclose(np.abs(np.exp(2j * theta(lam, 0.0, 0.3))), 1.0, rtol=1e-12)

    def test_bad_parameters(self):
        """Test that a non-positive radius is an input error"""
        with self.assertRaises(InputError):
            build_contour(0.0, 16)


class TestContourProperties(SimpleTestCase):
    def setUp(self):
        """Set up test data"""
        rng = np.random.default_rng(load_run_config().seed)
        self.lam = rng.uniform(0.01, 5.0, 10_000) * np.exp(1j * rng.uniform(-math.pi, math.pi, 10_000))

    def test_random_points_partition(self):
        """Test that random points fall in exactly one sector, the one their argument selects"""
        counts = dict.fromkeys(range(1, 7), 0)
        for lam in self.lam:
            location = classify(lam)
            self.assertFalse(location.on_contour)
            containing = [s.index for s in SECTORS if s.contains(lam)]
            self.assertEqual(containing, [location.sector])
            arg = math.atan2(lam.imag, lam.real) % math.pi
            self.assertLess(abs(arg - (location.sector - 0.5) * math.pi / 6), math.pi / 12)
            counts[location.sector] += 1
        # uniform arguments: about 1667 per sector
        for sector, count in counts.items():
            self.assertGreater(count, 1400, sector)
            self.assertLess(count, 1950, sector)

    def test_theta_parity(self):
        """Test that theta is even in lam"""
        for x, y in ((0.0, 0.0), (0.7, 0.0), (0.0, 0.3), (1.3, 0.05)):
            assert_allclose(theta(-self.lam, x, y), theta(self.lam, x, y), rtol=1e-13)

    def test_sign_structure_by_sector(self):
        """Test the signs of Im lam^2 and Im lam^6 in each sector"""
        expected = {1: (1, 1), 2: (1, -1), 3: (1, 1), 4: (-1, -1), 5: (-1, 1), 6: (-1, -1)}
        im2, im6 = ray_sign_regions(self.lam)
        for k, lam in enumerate(self.lam):
            self.assertEqual((im2[k], im6[k]), expected[classify(lam).sector])

    def test_rays_carry_real_phases(self):
        """Test that lam^2 and lam^6 are real on the even rays and lam^6 on every ray"""
        contour = build_contour(2.0, 8)
        for ray in range(NUM_RAYS):
            lam = contour.nodes[ray]
            assert_allclose((lam ** 6).imag, 0.0, atol=1e-10 * np.max(np.abs(lam)) ** 6)
            if ray % 3 == 0:
                assert_allclose((lam ** 2).imag, 0.0, atol=1e-12)


class TestLaxPair(SimpleTestCase):
    def setUp(self):
        """Set up test data"""
        self.lam = np.array([0.7, 0.4 + 0.9j, -1.1 + 0.2j])
        rng = np.random.default_rng(7)
        self.jet = FieldJet(*(0.1 * (rng.normal(size=3) + 1j * rng.normal(size=3))))

    def test_parity_conjugation(self):
        """Test that every coefficient matrix is sigma3-conjugated under lam -> -lam"""
        for build in (
            lambda lam: assemble_U(self.jet, lam),
            lambda lam: assemble_V(self.jet, lam),
            lambda lam: assemble_N1(self.jet.u, 0.3 - 0.1j, lam),
            lambda lam: assemble_N2(self.jet.u, self.jet.u_x, self.jet.u_xx, 0.2j, lam),
        ):
            assert_allclose(build(-self.lam), SIGMA3 @ build(self.lam) @ SIGMA3, atol=1e-14)

    def test_traceless(self):
        """Test that U and V are traceless"""
        for M in (assemble_U(self.jet, self.lam), assemble_V(self.jet, self.lam)):
            assert_allclose(np.trace(M, axis1=-2, axis2=-1), 0.0, atol=1e-14)

    def test_zero_curvature_on_a_jet(self):
        """Test U_y - V_x + [U, V] = 0 for a cubic u whose y-derivative is set by the equation"""
        c = np.array([0.08 + 0.03j, -0.05 + 0.02j, 0.04j, 0.01 - 0.02j])
        h = 1e-4

        def jet(x):
            u = c[0] + c[1] * x + c[2] * x ** 2 + c[3] * x ** 3
            u_x = c[1] + 2 * c[2] * x + 3 * c[3] * x ** 2
            u_xx = 2 * c[2] + 6 * c[3] * x
            return u, u_x, u_xx, 6 * c[3]

        u, u_x, u_xx, u_xxx = jet(0.0)
        u_y = rhs(u, u_x, u_xx, u_xxx)
        for lam in self.lam:
            U = assemble_U(FieldJet(u), lam)
            U_y = np.array([[-0.5j * u_y, lam * u_y], [0, 0.5j * u_y]])
            V = assemble_V(FieldJet(u, u_x, u_xx), lam)
            V_plus = assemble_V(FieldJet(*jet(h)[:3]), lam)
            V_minus = assemble_V(FieldJet(*jet(-h)[:3]), lam)
            V_x = (V_plus - V_minus) / (2 * h)
            residual = U_y - V_x + U @ V - V @ U
            assert_allclose(residual, 0.0, atol=1e-7)

    def test_one_form_is_closed_on_the_jet(self):
        """Test that d_y Delta_1 equals d_x Delta_2 pointwise"""
        u, u_x, u_xx, u_xxx = 0.05 + 0.02j, -0.01j, 0.03, 0.02 - 0.01j
        form = delta_one_form(FieldJet(u, u_x, u_xx))
        self.assertEqual(form.delta1, 0.5 * u)
        d1_y = 0.5 * rhs(u, u_x, u_xx, u_xxx)
        d2_x = -0.25 * u_xxx + 0.75j * (u_x * u_x + u * u_xx) + 0.75 * u * u * u_x
        assert_allclose(d1_y, d2_x, atol=1e-15)

    def test_residuals_vanish_for_zero_field(self):
        """Test that the grid residuals are zero on the zero field"""
        field = FieldGrid(hx=0.1, hy=0.01, samples=np.zeros((5, 12)))
        self.assertEqual(conservation_residual(field), 0.0)
        self.assertEqual(closedness_residual(field), 0.0)

    def test_residual_grid_too_small(self):
        """Test that residuals need three points per direction"""
        with self.assertRaises(InputError):
            conservation_residual(FieldGrid(hx=0.1, hy=0.1, samples=np.zeros((2, 8))))

    def test_convergence_ratio(self):
        """Test the ratio used by refinement reports"""
        self.assertEqual(convergence_ratio(4e-4, 1e-4), 4.0)
        self.assertTrue(math.isinf(convergence_ratio(1e-4, 0.0)))


class TestDirectProblem(SimpleTestCase):
    def setUp(self):
        """Set up test data"""
        self.profile = gaussian_profile()
        self.lam = first_quadrant(12)

    def test_zero_profile_gives_trivial_ab(self):
        """Test that zero initial data give a = 1 and b = 0"""
        a, b = compute_ab(Profile.zeros("x", 0.1, 60), self.lam)
        assert_allclose(a, 1.0, atol=1e-12)
        assert_allclose(b, 0.0, atol=1e-12)

    def test_zero_boundary_gives_trivial_AB(self):
        """Test that zero boundary data give A = 1 and B = 0 by both routes"""
        contour = build_contour(2.0, 8)
        lam = np.concatenate([contour.nodes[1], 1.5 * np.exp(1j * np.pi / 12) * np.ones(1)])
        spectral = compute_AB(BoundaryData.zeros(0.01, 11), 0.1, lam)
        for values, expected in ((spectral.A, 1.0), (spectral.B, 0.0), (spectral.A_mu2, 1.0), (spectral.B_mu2, 0.0)):
            assert_allclose(values, expected, atol=1e-12)
        # the sector point only has the second column of mu2
        assert_allclose(spectral.A_hat[:-1], 1.0, atol=1e-12)
        self.assertTrue(np.isnan(spectral.A_hat[-1]))
        self.assertLess(spectral.route_discrepancy, 1e-9)

    def test_zero_profile_first_column(self):
        """Test that zero data still give b_hat = (i/lam)(1 - exp(-2i lam^2 X))"""
        profile = Profile.zeros("x", 0.1, 60)
        lam = np.array([0.5, 1.0, 1.7, 0.8j, 1.3j])
        s1 = compute_s1(profile, lam)
        X = profile.length
        assert_allclose(s1[:, 0, 0], 1.0, atol=1e-12)
        assert_allclose(s1[:, 1, 0], (1j / lam) * (1 - np.exp(-2j * lam ** 2 * X)), atol=1e-8)
        assert_allclose(s1[:, 1, 1], 1.0, atol=1e-12)

    def test_hat_functions_match_oracle(self):
        """Test step-mode a_hat, b_hat against the oracle normalized at the grid end"""
        h = 0.0625
        x = h * np.arange(81)
        steps = [(1.0, 2.0, 0.03 + 0j), (2.5, 3.5, 0.02j)]
        samples = np.zeros(x.size, dtype=complex)
        for start, end, value in steps:
            samples[(x >= start) & (x < end)] = value
        profile = Profile(tag="x", h=h, samples=samples)
        lam = np.conj(first_quadrant(20))
        a_hat, b_hat = compute_ab_hat(profile, lam, mode="step")
        expected = np.array([oracle_s1_piecewise_constant(steps, z, x_max=profile.length) for z in lam])
        assert_allclose(a_hat, expected[:, 0, 0], atol=1e-6)
        assert_allclose(b_hat, expected[:, 1, 0], atol=1e-6)
        det = a_hat * expected[:, 1, 1] - expected[:, 0, 1] * b_hat
        assert_allclose(det, 1.0, atol=1e-6)

    def test_oracle_normalization_point(self):
        """Test that the oracle refuses a normalization point inside the support"""
        with self.assertRaises(InputError):
            oracle_s1_piecewise_constant([(0.0, 1.0, 0.1)], 1.0, x_max=0.5)

    def test_parity_by_separate_integration(self):
        """Test that a is even and b is odd in lam"""
        a_plus, b_plus = compute_ab(self.profile, self.lam)
        a_minus, b_minus = compute_ab(self.profile, -self.lam)
        assert_allclose(a_minus, a_plus, atol=1e-9)
        assert_allclose(b_minus, -b_plus, atol=1e-9)

    def test_hat_parity_by_separate_integration(self):
        """Test that a_hat is even and b_hat is odd in lam"""
        lam = np.conj(self.lam)
        a_plus, b_plus = compute_ab_hat(self.profile, lam)
        a_minus, b_minus = compute_ab_hat(self.profile, -lam)
        assert_allclose(a_minus, a_plus, atol=1e-9)
        assert_allclose(b_minus, -b_plus, atol=1e-9)

    def test_unbounded_hat_request(self):
        """Test that a_hat, b_hat are refused where Im lam^2 > 0"""
        with self.assertRaises(InputError):
            compute_ab_hat(self.profile, np.array([1.0 + 1.0j]))

    def test_determinant_of_traces(self):
        """Test that mu1 keeps unit determinant along x on the real axis"""
        lam = np.array([0.5, 1.0, 1.7])
        trace = integrate_mu_x(self.profile, lam, "mu1", columns=(0, 1))
        assert_allclose(trace.determinant(), 1.0, atol=1e-8)


class TestEigenfunctionProperties(SimpleTestCase):
    def setUp(self):
        """Set up test data"""
        rng = np.random.default_rng(load_run_config().seed)
        self.profile = gaussian_profile(h=0.1)
        self.real = np.sort(rng.uniform(0.2, 2.0, 6)) * rng.choice([-1.0, 1.0], 6)
        self.upper = rng.uniform(0.3, 2.0, 6) * np.exp(1j * rng.uniform(0.05, 1.5, 6))
        self.x_out = self.profile.grid[::10]

    def test_scattering_relation(self):
        """Test mu1(x) = mu3(x) exp(-i lam^2 x sigma3) S1 exp(i lam^2 x sigma3) on the real axis"""
        mu1 = integrate_mu_x(self.profile, self.real, "mu1", columns=(0, 1), t_out=self.x_out)
        mu3 = integrate_mu_x(self.profile, self.real, "mu3", columns=(0, 1), t_out=self.x_out)
        s1 = compute_s1(self.profile, self.real)
        worst = 0.0
        for i, x in enumerate(self.x_out):
            phase = np.exp(-1j * self.real ** 2 * x)
            D = np.zeros((self.real.size, 2, 2), dtype=complex)
            D[:, 0, 0], D[:, 1, 1] = phase, 1 / phase
            D_inv = np.conj(D)
            predicted = mu3.values[i] @ D @ s1 @ D_inv
            worst = max(worst, float(np.max(np.abs(mu1.values[i] - predicted))))
        self.assertLess(worst, 1e-6)

    def test_sigma3_parity(self):
        """Test sigma3 mu(x, lam) sigma3 = mu(x, -lam) for both normalizations"""
        signs = np.array([[1, -1], [-1, 1]])
        for which in ("mu1", "mu3"):
            for lam, columns in ((self.real, (0, 1)), (self.upper, (1,) if which == "mu1" else (0,))):
                plus = integrate_mu_x(self.profile, lam, which, columns=columns, t_out=self.x_out)
                minus = integrate_mu_x(self.profile, -lam, which, columns=columns, t_out=self.x_out)
                for c in columns:
                    assert_allclose(minus.values[..., c], signs[:, c] * plus.values[..., c], atol=1e-9,
                                    err_msg=f"{which} column {c}")

    def test_matches_matrix_exponential_oracle(self):
        """Test step-mode integration against the piecewise-constant oracle"""
        h = 0.0625
        x = h * np.arange(81)
        steps = [(1.0, 2.0, 0.03 + 0j), (2.5, 3.5, 0.02j)]
        samples = np.zeros(x.size, dtype=complex)
        for start, end, value in steps:
            samples[(x >= start) & (x < end)] = value
        profile = Profile(tag="x", h=h, samples=samples)
        lam = first_quadrant(20)
        a, b = compute_ab(profile, lam, mode="step")
        expected = np.array([oracle_ab_piecewise_constant(steps, z) for z in lam])
        assert_allclose(a, expected[:, 0], atol=1e-6)
        assert_allclose(b, expected[:, 1], atol=1e-6)

    def test_oracle_rejects_overlaps(self):
        """Test that overlapping steps are an input error"""
        with self.assertRaises(InputError):
            oracle_ab_piecewise_constant([(0.0, 1.0, 0.1), (0.5, 2.0, 0.1)], 1.0)

    def test_unbounded_column_request(self):
        """Test that a, b are refused where Im lam^2 < 0"""
        with self.assertRaises(InputError):
            compute_ab(self.profile, np.array([1.0 - 1.0j]))

    def test_boundary_grid_mismatch(self):
        """Test that g0, g1, g2 must share one grid"""
        with self.assertRaises(InputError):
            BoundaryData(Profile.zeros("y", 0.01, 11), Profile.zeros("y", 0.01, 11), Profile.zeros("y", 0.01, 12))

    def test_L_must_match_grid(self):
        """Test that A, B refuse an L that disagrees with the data"""
        with self.assertRaises(InputError):
            compute_AB(BoundaryData.zeros(0.01, 11), 0.2, np.array([1.0]))


class TestSpectralTable(SimpleTestCase):
    def setUp(self):
        """Set up test data"""
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)
        self.contour = build_contour(2.0, 8)
        self.samples = sample_set(self.contour)

    def tearDown(self):
        self.tmp.cleanup()

    def test_trivial_tables(self):
        """Test that zero data tabulate to a = A = 1 and b = B = 0 wherever defined"""
        table = tabulate_ab(Profile.zeros("x", 0.1, 40), self.samples)
        table = table.merge(tabulate_AB(BoundaryData.zeros(0.01, 6), self.samples))
        for name, value in (("a", 1.0), ("b", 0.0), ("a_hat", 1.0), ("A", 1.0), ("B", 0.0), ("A_hat", 1.0)):
            column = table.column(name)
            finite = np.isfinite(column)
            self.assertTrue(finite.any())
            assert_allclose(column[finite], value, atol=1e-12)
        # a lives on rays 0..3 and 6..9, a_hat on 3..6 and 9..0
        self.assertTrue(np.all(np.isnan(table.column("a")[table.on_ray(4)])))
        self.assertTrue(np.all(np.isfinite(table.column("b_hat")[table.on_ray(4)])))
        self.assertTrue(np.all(np.isnan(table.column("b_hat")[table.on_ray(2)])))

        derived = derive_alpha_beta(table)
        assert_allclose(derived.alpha[np.isfinite(derived.alpha)], 1.0, atol=1e-12)
        assert_allclose(derived.beta[np.isfinite(derived.beta)], 0.0, atol=1e-12)
        for defect in (derived.det_s1_defect, derived.det_s2_defect, derived.det_s3_defect, derived.transfer_det_defect):
            self.assertLess(defect, 1e-9)

        relation = global_relation_residual(table)
        self.assertGreater(relation.samples, 0)
        self.assertEqual(relation.relative_residual, 0.0)

    def test_negative_half_is_integrated(self):
        """Test that samples at -lam come from their own integration and match by parity"""
        profile = gaussian_profile(h=0.1)
        table = tabulate_ab(profile, self.samples)
        idx = table.on_ray(7)
        a, b = compute_ab(profile, table.lam[idx])
        assert_allclose(table.column("a")[idx], a, atol=1e-9)
        assert_allclose(table.column("b")[idx], b, atol=1e-9)
        for name in ("a", "b", "a_hat", "b_hat"):
            self.assertLess(table.parity_defect(name), 1e-9, name)

    def test_negation_index(self):
        """Test that ray samples pair with the opposite ray and sector lines have no partner"""
        target = self.samples.negation_index()
        on_ray = self.samples.ray_or_sector >= 0
        assert_allclose(self.samples.lam[target[on_ray]], -self.samples.lam[on_ray], atol=1e-14)
        self.assertTrue(np.all(target[~on_ray] == -1))
        self.assertTrue(math.isnan(self.samples.parity_defect("a")))

    def test_measured_parity_detects_tampering(self):
        """Test that a value overwritten on one ray shows up as a parity defect"""
        table = tabulate_ab(gaussian_profile(h=0.1), self.samples)
        table.columns["b"] = table.column("b").copy()
        table.columns["b"][table.on_ray(7)] *= 1.01
        self.assertGreater(table.parity_defect("b"), 1e-6)

    def test_file_and_interpolation(self):
        """Test that a written table reads back and interpolates along a ray"""
        profile = gaussian_profile(h=0.1)
        table = tabulate_ab(profile, self.samples)
        path = atomic_write(self.dir / "spectral_ab.txt", table.dump())
        again = SpectralTable.read(path)
        np.testing.assert_array_equal(again.column("a"), table.column("a"))
        self.assertEqual(float(again.metadata["radius"]), 2.0)

        r = 0.5 * (self.contour.radii[5] + self.contour.radii[6])
        expected = compute_ab(profile, np.array([r * np.exp(1j * np.pi / 6)]))[0][0]
        assert_allclose(again.value("a", r * np.exp(1j * np.pi / 6)), expected, atol=1e-4)

    def test_merge_requires_same_samples(self):
        """Test that tables on different sample sets cannot be merged"""
        other = sample_set(build_contour(3.0, 8))
        with self.assertRaises(InputError):
            self.samples.merge(other)

    def test_dispatched_sweep_matches_inline(self):
        """Test that the celery path gives the same table as the inline sweep"""
        profile = gaussian_profile(h=0.1)
        # step control is shared across a chunk, so both paths use one chunk size
        with override_settings(FOKAS_SWEEP_CHUNK=16):
            inline = tabulate_ab(profile, self.samples)
        celery_app.conf.task_always_eager = True
        try:
            with override_settings(FOKAS_DISPATCH_SWEEPS=True, FOKAS_SWEEP_CHUNK=16):
                dispatched = tabulate_ab(profile, self.samples)
        finally:
            celery_app.conf.task_always_eager = False
        np.testing.assert_array_equal(dispatched.column("a"), inline.column("a"))
        np.testing.assert_array_equal(dispatched.column("b"), inline.column("b"))


class TestDerivedFunctions(SimpleTestCase):
    def setUp(self):
        """Set up test data"""
        self.samples = sample_set(build_contour(2.0, 8))
        h, n = 0.005, 11
        self.boundary = BoundaryData(
            Profile.sample(lambda y: 0.03 * np.exp(5j * y), "y", h, n),
            Profile.sample(lambda y: 0.02j * (1 + y), "y", h, n),
            Profile.sample(lambda y: -0.01 * np.cos(5 * y), "y", h, n),
        )
        self.table = tabulate_ab(gaussian_profile(h=0.1), self.samples).merge(
            tabulate_AB(self.boundary, self.samples)
        )

    def test_measured_parity(self):
        """Test the parity of alpha, beta and c_plus built from independently integrated samples"""
        derived = derive_alpha_beta(self.table)
        for name in ("alpha", "beta", "alpha_hat", "beta_hat", "c_plus", "A", "B", "A_hat", "B_hat"):
            defect = derived.table.parity_defect(name)
            self.assertFalse(math.isnan(defect), name)
            self.assertLess(defect, 1e-8, name)

    def test_determinants(self):
        """Test unit determinants of S1, S2, S3 and the transfer matrix"""
        derived = derive_alpha_beta(self.table)
        self.assertLess(derived.det_s1_defect, 1e-8)
        self.assertLess(derived.det_s2_defect, 1e-8)
        self.assertLess(derived.det_s3_defect, 1e-8)
        self.assertLess(derived.transfer_det_defect, 1e-8)
        self.assertEqual(derived.flagged.size, 0)

    def test_route_agreement(self):
        """Test that the transfer-matrix and mu2 routes give the same S2 on the contour"""
        on_contour = self.table.ray_or_sector >= 0
        for name, other in (("A", "A2"), ("B", "B2"), ("A_hat", "A2_hat"), ("B_hat", "B2_hat")):
            assert_allclose(self.table.column(name)[on_contour], self.table.column(other)[on_contour], atol=1e-8)

    def test_missing_column(self):
        """Test that alpha and beta need both scattering matrices"""
        table = tabulate_ab(gaussian_profile(h=0.1), self.samples)
        with self.assertRaises(InputError):
            derive_alpha_beta(table, L=0.05)


class TestGlobalRelation(SimpleTestCase):
    def setUp(self):
        """Set up test data"""
        self.samples = sample_set(build_contour(3.0, 16))
        self.L = 0.05
        self.u0 = gaussian_profile(center=1.0, h=0.05, x_max=8.0)

    def boundary_of(self, profile):
        traces = extract_traces(evolve(profile, self.L, hy=5e-4))
        return BoundaryData(traces.g0, traces.g1, traces.g2)

    def test_evolved_traces_satisfy_the_relation(self):
        """Test that traces of the evolved field pass and traces of other data fail by a wide margin"""
        initial = tabulate_ab(self.u0, self.samples)
        other = gaussian_profile(amplitude=0.04, center=1.5, h=0.05, x_max=8.0)
        compatible, incompatible = (
            global_relation_residual(initial.merge(tabulate_AB(self.boundary_of(profile), self.samples)))
            for profile in (self.u0, other)
        )

        self.assertGreater(compatible.samples, 0)
        self.assertLessEqual(compatible.decay, 1e-3)
        self.assertGreater(compatible.scale, 0.0)
        self.assertLess(compatible.relative_residual, 1e-2)
        self.assertGreater(incompatible.relative_residual, 10 * compatible.relative_residual)

    def test_table_too_small_for_decay(self):
        """Test that the outermost samples stand in when exp(4i lam^6 L) never decays enough"""
        samples = sample_set(build_contour(1.0, 8))
        table = tabulate_ab(Profile.zeros("x", 0.1, 40), samples).merge(
            tabulate_AB(BoundaryData.zeros(0.01, 6), samples)
        )
        relation = global_relation_residual(table)
        self.assertEqual(relation.samples, 2)
        self.assertGreater(relation.decay, 1e-3)

    def test_without_interior_lines(self):
        """Test that a table without sector lines reports NaN"""
        samples = sample_set(build_contour(2.0, 8), interior=False)
        table = tabulate_ab(Profile.zeros("x", 0.1, 40), samples).merge(
            tabulate_AB(BoundaryData.zeros(0.01, 6), samples)
        )
        relation = global_relation_residual(table)
        self.assertEqual(relation.samples, 0)
        self.assertTrue(math.isnan(relation.relative_residual))


class TestZeros(SimpleTestCase):
    def setUp(self):
        """Set up test data"""
        self.z0 = 0.5 + 0.5j
        self.zeta = cmath.sqrt(self.z0)

    def a(self, lam):
        lam = np.asarray(lam, dtype=complex)
        return (lam ** 2 - self.z0) / (lam ** 2 - np.conj(self.z0))

    def test_winding_count(self):
        """Test the argument principle count on a wedge"""
        region = sector_region(1, 3, 3.0)
        self.assertEqual(winding_count(lambda lam: lam ** 2 - (1 + 1j), region), 1)
        self.assertEqual(winding_count(lambda lam: lam ** 2 + (1 + 1j), region), 0)

    def test_find_simple_zero(self):
        """Test that the zero of lam^2 - (1 + i) is found and polished"""
        zeros = find_zeros(lambda lam: lam ** 2 - (1 + 1j), sector_region(1, 3, 3.0), function="a")
        self.assertEqual(len(zeros), 1)
        expected = cmath.sqrt(1 + 1j)
        self.assertLess(abs(zeros[0].location - expected), 1e-9)
        self.assertLess(abs(zeros[0].derivative - 2 * expected), 1e-6)
        self.assertEqual(zeros[0].sector, classify(expected).sector)

    def test_double_zero_is_rejected(self):
        """Test that a double zero is reported as clustered"""
        with self.assertRaises(NumericalError):
            find_zeros(lambda lam: (lam - (1 + 0.5j)) ** 2, sector_region(1, 3, 3.0))

    def test_far_field_certificate(self):
        """Test the annulus certificate on 1 + 1/lam^2"""
        value = far_field_certificate(lambda lam: 1 + 1 / lam ** 2, 3.0, 0.0, math.pi / 2)
        assert_allclose(value, 1 / 9, rtol=1e-12)

    def test_with_negatives(self):
        """Test that zeros are completed by their parity images"""
        zeros = find_zeros(self.a, sector_region(1, 3, 3.0), function="a")
        completed = with_negatives(zeros)
        self.assertEqual(len(completed), 2)
        self.assertLess(abs(completed[1].location + completed[0].location), 1e-14)


def shrinking_limit(f, zeta, eps=1e-5):
    """Res of f at zeta from symmetric offsets eps -> 0."""
    offsets = eps * np.array([1, -1, 1j, -1j])
    return complex(np.mean(offsets * f(zeta + offsets)))


class TestResidues(SimpleTestCase):
    def setUp(self):
        """Set up test data"""
        z0 = 0.5 + 0.5j
        self.functions = {
            "a": lambda lam: (lam ** 2 - z0) / (lam ** 2 - np.conj(z0)),
            "a_hat": lambda lam: (lam ** 2 - np.conj(z0)) / (lam ** 2 - z0),
            "alpha": lambda lam: (lam ** 2 + 0.8j) / (lam ** 2 - 0.8j),
            "alpha_hat": lambda lam: (lam ** 2 - 0.8j) / (lam ** 2 + 0.8j),
            "b": lambda lam: 0.02 * lam / (4 + lam ** 2),
            "b_hat": lambda lam: 0.03j * lam / (4 + lam ** 2),
            "B": lambda lam: 0.05 * lam ** 3 / (4 + lam ** 2) + 0.01 * lam,
            "B_hat": lambda lam: -0.04j * lam / (4 + lam ** 2),
            "beta": lambda lam: 0.02 * lam * (1 + 0.5j * lam ** 2),
            "beta_hat": lambda lam: 0.03j * lam / (5 + lam ** 2),
        }
        # one zero each: sector 1, 6, 5 and 2
        self.regions = {
            "a": sector_region(1, 3, 3.0),
            "a_hat": sector_region(4, 6, 3.0),
            "alpha": sector_region(5, 5, 3.0),
            "alpha_hat": sector_region(2, 2, 3.0),
        }

    def zero(self, name, function=None, partners=()):
        (zero,) = find_zeros(self.functions[name], self.regions[name], function=function or name)
        return replace(zero, partners={p: complex(self.functions[p](zero.location)) for p in partners})

    def ratio(self, numerator, *denominators):
        def f(lam):
            out = self.functions[numerator](lam)
            for name in denominators:
                out = out / self.functions[name](lam)
            return out

        return f

    def assert_pole(self, pole, column, phase_sign, f):
        self.assertEqual((pole.column, pole.phase_sign), (column, phase_sign))
        assert_allclose(pole.coefficient, shrinking_limit(f, pole.location), rtol=1e-8)

    def test_principal_a_residues(self):
        """Test that the residues at zeros of a and a_hat are the limits of b/a and b_hat/a_hat"""
        za = self.zero("a", partners=("b",))
        zh = self.zero("a_hat", partners=("b_hat",))
        self.assertEqual((za.sector, zh.sector), (1, 6))
        data = residue_data(ZeroSet(a_zeros=[za], a_hat_zeros=[zh]), "principal")
        self.assertEqual(len(data), 2)
        self.assert_pole(data.poles[0], 2, -1, self.ratio("b", "a"))
        self.assert_pole(data.poles[1], 1, 1, self.ratio("b_hat", "a_hat"))

    def test_x_residues_keep_every_sector(self):
        """Test that a zero of a in sector 2 is a pole of the x-problem only"""
        zero = self.zero("alpha_hat", function="a", partners=("b",))
        self.assertEqual(zero.sector, 2)
        self.assertEqual(len(residue_data(ZeroSet(a_zeros=[zero]), "principal")), 0)
        data = residue_data(ZeroSet(a_zeros=[zero]), "x")
        self.assert_pole(data.poles[0], 2, -1, self.ratio("b", "alpha_hat"))

    def test_principal_alpha_residues(self):
        """Test the residues at zeros of alpha and alpha_hat against B/(a_hat alpha) and B_hat/(a alpha_hat)"""
        zero = self.zero("alpha", partners=("B", "a_hat"))
        zero_hat = self.zero("alpha_hat", partners=("B_hat", "a"))
        self.assertEqual((zero.sector, zero_hat.sector), (5, 2))
        data = residue_data(ZeroSet(alpha_zeros=[zero], alpha_hat_zeros=[zero_hat]))
        self.assert_pole(data.poles[0], 2, -1, self.ratio("B", "a_hat", "alpha"))
        self.assert_pole(data.poles[1], 1, 1, self.ratio("B_hat", "a", "alpha_hat"))

    def test_y_residues(self):
        """Test the residues at zeros of A and A_hat against B/A and B_hat/A_hat"""
        zero = self.zero("a", function="A", partners=("B",))
        zero_hat = self.zero("alpha_hat", function="A_hat", partners=("B_hat",))
        data = residue_data(ZeroSet(A_zeros=[zero], A_hat_zeros=[zero_hat]), "y")
        self.assert_pole(data.poles[0], 2, -1, self.ratio("B", "a"))
        self.assert_pole(data.poles[1], 1, 1, self.ratio("B_hat", "alpha_hat"))

    def test_L_residues(self):
        """Test the residues at zeros of alpha and alpha_hat against -beta_hat/alpha and -beta/alpha_hat"""
        zero = self.zero("alpha", partners=("beta_hat",))
        zero_hat = self.zero("alpha_hat", partners=("beta",))
        data = residue_data(ZeroSet(alpha_zeros=[zero], alpha_hat_zeros=[zero_hat]), "L")

        def negated(f):
            return lambda lam: -f(lam)

        self.assert_pole(data.poles[0], 1, 1, negated(self.ratio("beta_hat", "alpha")))
        self.assert_pole(data.poles[1], 2, -1, negated(self.ratio("beta", "alpha_hat")))

    def test_missing_partner(self):
        """Test that a zero without its partner value is bad input"""
        with self.assertRaises(InputError):
            residue_data(ZeroSet(alpha_zeros=[self.zero("alpha", partners=("B",))]))

    def test_degenerate_residue(self):
        """Test that a vanishing partner in the y context is rejected"""
        zero = self.zero("a", function="A")
        with self.assertRaises(NumericalError):
            residue_data(ZeroSet(A_zeros=[replace(zero, partners={"B": 0.0})]), "y")

    def test_unknown_context(self):
        """Test that only the four problems have residue data"""
        with self.assertRaises(InputError):
            residue_data(ZeroSet(), "t")

    def test_pole_factor_and_file(self):
        """Test the pole phase and the residue file"""
        pole = Pole(0.8 + 0.3j, 2, 0.1 + 0.2j, -1)
        other = Pole(-0.6 + 0.5j, 1, -0.03j, 1)
        lam2 = pole.location ** 2
        expected = pole.coefficient * cmath.exp(-2j * (lam2 * 0.4 + 2 * lam2 ** 3 * 0.1))
        assert_allclose(pole.factor(0.4, 0.1), expected, rtol=1e-13)

        with tempfile.TemporaryDirectory() as tmp:
            path = atomic_write(Path(tmp) / "residues.txt", ResidueData("x", [pole, other]).dump())
            again = ResidueData.read(path)
        self.assertEqual(again.context, "x")
        self.assertEqual(again.poles, [pole, other])
