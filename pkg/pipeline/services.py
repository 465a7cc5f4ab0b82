"""
Pipeline services

Each management command is a thin wrapper around one PipelineService method.
Methods read their inputs, run the numerical apps and return a ServiceResult:
a flat key=value report, the files written and the names of failed checks.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from django.db import DatabaseError
from django.utils import timezone

from common.config import RunConfig
from common.exceptions import FokasError, InputError
from common.formats import (
    FieldGrid,
    Profile,
    atomic_write,
    dump_records,
    format_report,
    parse_report,
    read_field,
    read_profile,
    read_steps,
    write_field,
    write_profile,
)
from oracle.evolver import (
    ManufacturedSolution,
    compatibility_check,
    evolve,
    evolve_manufactured,
    extract_traces,
)
from rhp.jumps import FAMILIES, FAMILY_INPUTS, build_assembly, composite_J4, family_matrix, spectral_values
from rhp.reconstruction import (
    boundary_gauge,
    consistency_gradient,
    reconstruct_boundary,
    reconstruct_hL,
    reconstruct_u,
)
from rhp.solver import cauchy_minus_matrix, extract_coefficients, solve_rhp
from spectral.analysis import (
    ResidueData,
    ZeroSet,
    derive_alpha_beta,
    far_field_certificate,
    find_zeros,
    global_relation_residual,
    residue_data,
    sector_region,
    with_negatives,
)
from spectral.contour import NUM_RAYS, build_contour
from spectral.direct import (
    BoundaryData,
    SpectralTable,
    compute_AB,
    compute_ab,
    compute_ab_hat,
    compute_s1,
    oracle_s1_piecewise_constant,
    sample_set,
    tabulate_AB,
    tabulate_ab,
)
from spectral.lax_pair import closedness_residual, conservation_residual, convergence_ratio, zero_curvature_residual

from .models import PipelineRun, RunStatus

logger = logging.getLogger(__name__)

DET_TOLERANCE = 1e-8
PARITY_TOLERANCE = 1e-10
ORACLE_TOLERANCE = 1e-6
ROUTE_TOLERANCE = 1e-6
CYCLIC_TOLERANCE = 1e-6
GLOBAL_RELATION_TOLERANCE = 1e-2
PARITY_PAIRS = 100
ORACLE_SAMPLES = 24
# Largest |lam| used by the integration-heavy property suites.
CHECK_RADIUS = 3.0
STORED_LEVELS = 200
CERTIFICATE = 0.5
# Entries whose parity images are compared on the table; both signs were integrated.
PARITY_COLUMNS = ("a", "b", "a_hat", "b_hat", "A", "B", "A_hat", "B_hat", "alpha", "beta", "alpha_hat", "beta_hat", "c_plus")
# S(-lam) = sigma3 S(lam) sigma3
PARITY_SIGNS = np.array([[1, -1], [-1, 1]])


@dataclass
class ServiceResult:
    report: dict = field(default_factory=dict)
    outputs: list[Path] = field(default_factory=list)
    failures: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures


class RunLedger:
    """Records one command invocation as a PipelineRun row"""

    def __init__(self, command: str, config: RunConfig):
        self.command = command
        self.config = config
        self.run: Optional[PipelineRun] = None

    def __enter__(self) -> "RunLedger":
        try:
            self.run = PipelineRun.objects.create(command=self.command, config=self.config.model_dump())
        except DatabaseError as e:
            logger.error(f"Error in RunLedger: {str(e)}")
        return self

    def finish(self, result: ServiceResult, exit_code: int):
        if self.run is None:
            return
        self.run.summary = parse_report(format_report(result.report))
        self.run.outputs = [str(p) for p in result.outputs]
        self.run.exit_code = exit_code
        self.run.status = RunStatus.SUCCEEDED if exit_code == 0 else RunStatus.FAILED
        if result.failures:
            self.run.error = "failed checks: " + ", ".join(result.failures)
        self._save()

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and self.run is not None:
            self.run.status = RunStatus.FAILED
            self.run.exit_code = exc.exit_code if isinstance(exc, FokasError) else 3
            self.run.error = str(exc)
            self._save()
        return False

    def _save(self):
        self.run.finished_at = timezone.now()
        try:
            self.run.save()
        except DatabaseError as e:
            logger.error(f"Error in RunLedger: {str(e)}")


def _finite_max(values) -> float:
    values = np.abs(np.asarray(values))
    values = values[np.isfinite(values)]
    return float(values.max()) if values.size else math.nan


def _route_discrepancy(table: SpectralTable) -> float:
    """S2 entries from the transfer matrix against mu2(0, 0)."""
    pairs = (("A", "A2"), ("B", "B2"), ("A_hat", "A2_hat"), ("B_hat", "B2_hat"))
    return _finite_max(np.concatenate([table.column(name) - table.column(mu2) for name, mu2 in pairs]))


def _stride(steps: int, limit: int = STORED_LEVELS) -> int:
    """Smallest divisor of steps that keeps at most limit stored y intervals."""
    return next(d for d in range(1, steps + 1) if steps % d == 0 and steps // d <= limit)


def _uniform_axis(values: Sequence[float], name: str) -> tuple[np.ndarray, float]:
    axis = np.asarray(sorted(float(v) for v in values), dtype=float)
    if axis.size == 0:
        raise InputError(f"at least one {name} value is required")
    if np.any(axis < 0):
        raise InputError(f"{name} values must be non-negative")
    if axis.size == 1:
        return axis, 1.0
    steps = np.diff(axis)
    if not np.allclose(steps, steps[0], rtol=1e-9, atol=0) or steps[0] <= 0:
        raise InputError(f"{name} values must form a uniform grid")
    return axis, float(steps[0])


def _reference_error(reconstructed: np.ndarray, points: np.ndarray, reference: Profile) -> float:
    """Relative max-norm error against a profile sampled at the same points."""
    index = np.rint(points / reference.h).astype(int)
    if np.any(index >= reference.n) or not np.allclose(index * reference.h, points, atol=1e-9 * reference.h + 1e-12):
        raise InputError("reference profile does not contain the reconstruction grid")
    expected = reference.samples[index]
    scale = float(np.max(np.abs(expected)))
    error = float(np.max(np.abs(reconstructed - expected)))
    return error / scale if scale > 0 else error


class PipelineService:
    """Service class behind the management commands"""

    def __init__(self, config: RunConfig):
        self.config = config

    # Inputs

    def _output(self, name: str) -> Path:
        return self.config.output_path / name

    def _guard(self, profile: Profile, label: str):
        if profile.sup_norm > self.config.amplitude_guard:
            raise InputError(
                f"{label} exceeds the amplitude guard",
                sup_norm=profile.sup_norm, amplitude_guard=self.config.amplitude_guard,
            )

    def read_initial(self, path) -> Profile:
        profile = read_profile(path)
        if profile.tag != "x":
            raise InputError(f"{path} is not an x-profile", path=str(path))
        self._guard(profile, str(path))
        return profile

    def read_boundary(self, paths: Sequence) -> BoundaryData:
        if len(paths) != 3:
            raise InputError("boundary data needs exactly three files: g0 g1 g2")
        data = BoundaryData(*(read_profile(p) for p in paths))
        self._guard(data.g0, str(paths[0]))
        return data

    def read_tables(self, paths: Sequence) -> SpectralTable:
        tables = [SpectralTable.read(p) for p in paths]
        table = tables[0]
        for other in tables[1:]:
            table = table.merge(other)
        return table

    def contour(self):
        return build_contour(self.config.truncation_radius, self.config.nodes_per_ray)

    # Direct problems

    def scatter(self, u0_path, oracle_check: bool = False, steps_path=None, mode: str = "spline") -> ServiceResult:
        u0 = self.read_initial(u0_path)
        if oracle_check and steps_path is None:
            raise InputError("--oracle-check needs a --steps file")
        table = tabulate_ab(u0, sample_set(self.contour()), rtol=self.config.rtol, mode=mode)
        result = ServiceResult()
        result.outputs.append(atomic_write(self._output("spectral_ab.txt"), table.dump()))

        contour = table.ray_or_sector >= 0
        outer = contour & (table.node == table.node.max())
        a, b = table.column("a"), table.column("b")
        det = a * table.column("a_hat") - b * table.column("b_hat")
        result.report.update({
            "scatter.samples": int(table.lam.size),
            "scatter.x_max": u0.length,
            "scatter.det_s1_defect": _finite_max(det - 1),
            "scatter.far_a_defect": _finite_max(a[outer] - 1),
            "scatter.far_b": _finite_max(b[outer]),
        })
        if oracle_check:
            discrepancy = self._oracle_check(u0, read_steps(steps_path), table)
            result.report["scatter.oracle_discrepancy"] = discrepancy
            if not discrepancy <= ORACLE_TOLERANCE:
                result.failures.append("oracle")
        logger.info(f"Scatter wrote {table.lam.size} samples to {result.outputs[0]}")
        return result

    def _oracle_picks(self, table: SpectralTable, rays: Sequence[int]) -> np.ndarray:
        candidates = np.flatnonzero(np.isin(table.ray_or_sector, rays) & (np.abs(table.lam) <= CHECK_RADIUS))
        picks = candidates[np.linspace(0, candidates.size - 1, min(ORACLE_SAMPLES, candidates.size)).astype(int)]
        return table.lam[picks]

    def _oracle_check(self, u0: Profile, steps, table: SpectralTable) -> float:
        """Both columns of S1 in step mode against the matrix-exponential product."""
        x_max = float(u0.grid[-1])
        lam = self._oracle_picks(table, (0, 1, 2, 3))
        a, b = compute_ab(u0, lam, rtol=self.config.rtol, mode="step")
        expected = np.array([oracle_s1_piecewise_constant(steps, z, x_max) for z in lam])
        discrepancy = max(_finite_max(a - expected[:, 1, 1]), _finite_max(b - expected[:, 0, 1]))

        lam = self._oracle_picks(table, (3, 4, 5, 6))
        a_hat, b_hat = compute_ab_hat(u0, lam, rtol=self.config.rtol, mode="step")
        expected = np.array([oracle_s1_piecewise_constant(steps, z, x_max) for z in lam])
        discrepancy = max(discrepancy, _finite_max(a_hat - expected[:, 0, 0]), _finite_max(b_hat - expected[:, 1, 0]))
        logger.info(f"Oracle check at {2 * lam.size} lam samples: discrepancy {discrepancy:.3e}")
        return discrepancy

    def boundary_scatter(self, g_paths: Sequence, L: Optional[float] = None, mode: str = "spline") -> ServiceResult:
        data = self.read_boundary(g_paths)
        if L is not None and not np.isclose(L, data.L, rtol=0, atol=0.5 * data.g0.h):
            raise InputError("L does not match the boundary data grid", L=L, grid_length=data.L)
        table = tabulate_AB(data, sample_set(self.contour()), rtol=self.config.rtol, mode=mode)
        result = ServiceResult()
        result.outputs.append(atomic_write(self._output("spectral_AB.txt"), table.dump()))

        A, B = table.column("A"), table.column("B")
        det = A * table.column("A_hat") - B * table.column("B_hat")
        T11, T12, T21, T22 = (table.column(n) for n in ("T11", "T12", "T21", "T22"))
        result.report.update({
            "boundary_scatter.samples": int(table.lam.size),
            "boundary_scatter.L": data.L,
            "boundary_scatter.det_s2_defect": _finite_max(det - 1),
            "boundary_scatter.transfer_det_defect": _finite_max(T11 * T22 - T12 * T21 - 1),
            "boundary_scatter.ab_route_discrepancy": _route_discrepancy(table),
        })
        logger.info(f"Boundary scatter wrote {table.lam.size} samples to {result.outputs[0]}")
        return result

    # Validation

    def validate(
        self,
        table_paths: Sequence,
        u0_path=None,
        g_paths: Optional[Sequence] = None,
        x: float = 0.5,
        y: Optional[float] = None,
    ) -> ServiceResult:
        table = self.read_tables(table_paths)
        derived = derive_alpha_beta(table)
        L = float(table.metadata["L"])
        y = 0.5 * L if y is None else y
        full = derived.table
        relation = global_relation_residual(table, L)

        checks = {
            "det_s1": (derived.det_s1_defect, DET_TOLERANCE),
            "det_s2": (derived.det_s2_defect, DET_TOLERANCE),
            "det_s3": (derived.det_s3_defect, DET_TOLERANCE),
            "det_transfer": (derived.transfer_det_defect, DET_TOLERANCE),
            "ab_route_discrepancy": (_route_discrepancy(table), ROUTE_TOLERANCE),
            "global_relation": (relation.relative_residual, GLOBAL_RELATION_TOLERANCE),
            "parity.table": (_finite_max([full.parity_defect(name) for name in PARITY_COLUMNS]), PARITY_TOLERANCE),
        }
        checks.update(self._jump_checks(full, x, y, L))
        if u0_path is not None:
            checks["parity.ab"] = (self._parity_ab(self.read_initial(u0_path), table), PARITY_TOLERANCE)
        if g_paths:
            checks["parity.AB"] = (self._parity_AB(self.read_boundary(g_paths), table), PARITY_TOLERANCE)

        result = ServiceResult()
        result.report.update({f"validate.{k}": v for k, v in relation.report().items()})
        for name, (value, tolerance) in checks.items():
            key = f"validate.{name}"
            result.report[key] = value
            if not np.isfinite(value):
                result.report[f"{key}.status"] = "skipped"
                continue
            ok = value <= tolerance
            result.report[f"{key}.status"] = "pass" if ok else "fail"
            if not ok:
                result.failures.append(name)
        result.report["validate.flagged_samples"] = int(derived.flagged.size)
        result.report["validate.status"] = "pass" if result.passed else "fail"
        if result.failures:
            logger.warning(f"Validation failures: {', '.join(result.failures)}")
        return result

    def _jump_checks(self, table: SpectralTable, x: float, y: float, L: float) -> dict:
        checks = {}
        for family in FAMILIES:
            assembly = build_assembly(family, table)
            y_eval = L if family == "L" else y
            J = assembly.evaluate(x, y_eval)
            det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
            checks[f"jump.{family}.det"] = (_finite_max(det - 1), DET_TOLERANCE)

        # the ray formulas evaluated at one real lam must compose to the identity around the origin
        idx = table.on_ray(0)
        values = spectral_values(table, FAMILY_INPUTS["principal"], idx)
        lam = table.lam[idx]
        product = np.broadcast_to(np.eye(2, dtype=complex), lam.shape + (2, 2)).copy()
        for ray in range(NUM_RAYS):
            product = product @ family_matrix("principal", ray, values, lam, x, y)
        checks["jump.cyclic_product"] = (_finite_max(product - np.eye(2)), CYCLIC_TOLERANCE)
        crossing = (family_matrix("principal", 2, values, lam, x, y)
                    @ family_matrix("principal", 3, values, lam, x, y)
                    @ family_matrix("principal", 4, values, lam, x, y))
        checks["jump.composite_J4"] = (_finite_max(composite_J4(values, lam, x, y) - crossing), CYCLIC_TOLERANCE)
        return checks

    def _parity_samples(self, table: SpectralTable) -> np.ndarray:
        rng = np.random.default_rng(self.config.seed)
        lam = table.lam
        pool = np.flatnonzero((np.abs(lam) <= CHECK_RADIUS) & (table.ray_or_sector < 6))
        if pool.size > PARITY_PAIRS:
            pool = np.sort(rng.choice(pool, PARITY_PAIRS, replace=False))
        return lam[pool]

    def _parity_ab(self, u0: Profile, table: SpectralTable) -> float:
        """Diagonal of S1 even, off-diagonal odd, from independent integrations at lam and -lam."""
        lam = self._parity_samples(table)
        plus = compute_s1(u0, lam, rtol=self.config.rtol)
        minus = compute_s1(u0, -lam, rtol=self.config.rtol)
        defect = _finite_max(minus - PARITY_SIGNS * plus)
        logger.info(f"Parity of S1 over {lam.size} pairs: {defect:.3e}")
        return defect

    def _parity_AB(self, data: BoundaryData, table: SpectralTable) -> float:
        lam = self._parity_samples(table)
        plus = compute_AB(data, data.L, lam, rtol=self.config.rtol).matrix()
        minus = compute_AB(data, data.L, -lam, rtol=self.config.rtol).matrix()
        defect = _finite_max(minus - PARITY_SIGNS * plus)
        logger.info(f"Parity of S2 over {lam.size} pairs: {defect:.3e}")
        return defect

    # Zeros and residues

    def zeros(self, table_paths: Sequence, u0_path, g_paths: Sequence) -> ServiceResult:
        table = self.read_tables(table_paths)
        u0 = self.read_initial(u0_path)
        data = self.read_boundary(g_paths)
        R = float(table.metadata.get("radius", self.config.truncation_radius))
        rtol = self.config.rtol

        def ab(lam):
            return compute_ab(u0, lam, rtol=rtol)

        def ab_hat(lam):
            return compute_ab_hat(u0, lam, rtol=rtol)

        def boundary(lam):
            return compute_AB(data, data.L, lam, rtol=rtol)

        def alpha(lam):
            a_hat, b_hat = ab_hat(lam)
            s = boundary(lam)
            return a_hat * s.A - b_hat * s.B

        def alpha_hat(lam):
            a, b = ab(lam)
            s = boundary(lam)
            return a * s.A_hat - b * s.B_hat

        def at(z):
            return np.array([z.location])

        result = ServiceResult()
        zero_set = ZeroSet()

        zero_set.a_zeros = with_negatives(
            replace(z, partners={"b": complex(ab(at(z))[1][0])})
            for z in find_zeros(lambda lam: ab(lam)[0], sector_region(1, 3, R), function="a")
        )
        zero_set.a_hat_zeros = with_negatives(
            replace(z, partners={"b_hat": complex(ab_hat(at(z))[1][0])})
            for z in find_zeros(lambda lam: ab_hat(lam)[0], sector_region(4, 6, R), function="a_hat")
        )
        zero_set.alpha_zeros = with_negatives(
            replace(z, partners={"B": complex(boundary(at(z)).B[0]), "a_hat": complex(ab_hat(at(z))[0][0])})
            for z in find_zeros(alpha, sector_region(5, 5, R), function="alpha")
        )
        zero_set.alpha_hat_zeros = with_negatives(
            replace(z, partners={"B_hat": complex(boundary(at(z)).B_hat[0]), "a": complex(ab(at(z))[0][0])})
            for z in find_zeros(alpha_hat, sector_region(2, 2, R), function="alpha_hat")
        )
        for sector in (1, 3, 5):
            for z in find_zeros(lambda lam: boundary(lam).A, sector_region(sector, sector, R), function="A"):
                zero_set.A_zeros.append(replace(z, partners={"B": complex(boundary(at(z)).B[0])}))
        for sector in (2, 4, 6):
            for z in find_zeros(lambda lam: boundary(lam).A_hat, sector_region(sector, sector, R), function="A_hat"):
                zero_set.A_hat_zeros.append(replace(z, partners={"B_hat": complex(boundary(at(z)).B_hat[0])}))
        zero_set.A_zeros = with_negatives(zero_set.A_zeros)
        zero_set.A_hat_zeros = with_negatives(zero_set.A_hat_zeros)
        zero_set.check_separated()

        result.report.update(zero_set.report())
        certificates = {
            "a": far_field_certificate(lambda lam: ab(lam)[0], R, 0.0, math.pi / 2),
            "a_hat": far_field_certificate(lambda lam: ab_hat(lam)[0], R, math.pi / 2, math.pi),
            "alpha": far_field_certificate(alpha, R, 4 * math.pi / 6, 5 * math.pi / 6),
            "alpha_hat": far_field_certificate(alpha_hat, R, math.pi / 6, 2 * math.pi / 6),
        }
        for name, certificate in certificates.items():
            certified = certificate < CERTIFICATE
            result.report[f"zeros.{name}.certificate"] = certificate
            result.report[f"zeros.{name}.certified"] = certified
            if not certified:
                logger.warning(f"|{name} - 1| is not below {CERTIFICATE} at radius {R}; zeros beyond it are not excluded")

        for context in ("principal", "x", "y"):
            residues = residue_data(zero_set, context)
            result.outputs.append(atomic_write(self._output(f"residues_{context}.txt"), residues.dump()))
        if zero_set.alpha_zeros or zero_set.alpha_hat_zeros:
            logger.warning("L-problem residues need beta and beta_hat off the contour; pass them with --fixture-residues")
        else:
            result.outputs.append(atomic_write(self._output("residues_L.txt"), ResidueData("L").dump()))
        return result

    # Inverse problems

    def _envelope_phase(self, xs: np.ndarray, ys: np.ndarray) -> float:
        """Largest phase of exp(2i theta) along the truncated contour."""
        R = self.config.truncation_radius
        return 2 * (R ** 2 * float(np.max(xs)) + 2 * R ** 6 * float(np.max(ys)))

    def solve(
        self,
        table_paths: Sequence,
        xs: Sequence[float],
        ys: Sequence[float] = (0.0,),
        problem: str = "principal",
        residue_path=None,
        reference_path=None,
        g_paths: Optional[Sequence] = None,
    ) -> ServiceResult:
        if problem not in FAMILIES:
            raise InputError(f"unknown problem {problem!r}; choose from {', '.join(FAMILIES)}")
        table = self.read_tables(table_paths)
        xs, hx = _uniform_axis(xs, "x")
        ys, hy = _uniform_axis(ys, "y")
        if problem == "x":
            ys, hy = np.zeros(1), 1.0
        elif problem == "y":
            xs, hx = np.zeros(1), 1.0
        elif problem == "L":
            ys, hy = np.array([float(table.metadata["L"])]), 1.0

        residues = None
        if residue_path is not None:
            residues = ResidueData.read(residue_path)
            if residues.context != problem:
                raise InputError(f"residue file is for the {residues.context} problem, not {problem}")
        else:
            logger.info("No residue file given; assuming the spectral functions have no zeros")

        result = ServiceResult()
        phase = self._envelope_phase(xs, ys)
        envelope = phase > math.pi * self.config.nodes_per_ray
        result.report["solve.oscillation_phase"] = phase
        result.report["solve.envelope_warning"] = envelope
        if envelope:
            logger.warning(
                f"(x, y) up to ({xs.max()}, {ys.max()}) is outside the resolved envelope of a contour with "
                f"radius {self.config.truncation_radius} and {self.config.nodes_per_ray} nodes per ray; "
                f"expect degraded accuracy"
            )

        assembly = build_assembly(problem, table)
        C = cauchy_minus_matrix(assembly.contour)
        order = 5 if problem == "y" else 1
        solutions = [[solve_rhp(assembly, residues, float(x), float(y), C) for x in xs] for y in ys]
        coefficients = np.array([[extract_coefficients(s, order) for s in row] for row in solutions])

        rows = []
        for row in solutions:
            for s in row:
                m1 = s.coefficient(1)
                rows.append([s.x, s.y, s.residual, s.condition, s.det_defect,
                             m1[0, 0].real, m1[0, 0].imag, m1[0, 1].real, m1[0, 1].imag,
                             m1[1, 0].real, m1[1, 0].imag, m1[1, 1].real, m1[1, 1].imag])
        columns = ["x", "y", "residual", "condition", "det_drift",
                   "re_m1_11", "im_m1_11", "re_m1_12", "im_m1_12",
                   "re_m1_21", "im_m1_21", "re_m1_22", "im_m1_22"]
        result.outputs.append(atomic_write(
            self._output(f"solution_{problem}.txt"),
            dump_records("solution", {"problem": problem, "points": len(rows)}, columns, rows),
        ))
        flat = [s for row in solutions for s in row]
        result.report.update({
            "solve.problem": problem,
            "solve.points": len(flat),
            "solve.max_residual": max(s.residual for s in flat),
            "solve.max_condition": max(s.condition for s in flat),
            "solve.det_drift": max(s.det_defect for s in flat),
            "solve.normalization_defect": max(s.normalization_defect for s in flat),
            "solve.truncation_defect": max(s.truncation_defect for s in flat),
            "solve.poles": len(residues) if residues else 0,
        })

        m12 = coefficients[:, :, 0, 0, 1]
        reference = read_profile(reference_path) if reference_path is not None else None
        if problem in ("principal", "x"):
            self._reconstruct_field(result, m12, coefficients[:, :, 0, 1, 0], xs, ys, hx, hy, problem, reference)
        elif problem == "y":
            g0, g1, g2 = reconstruct_boundary(coefficients[:, 0], hy)
            for name, profile in (("g0", g0), ("g1", g1), ("g2", g2)):
                result.outputs.append(write_profile(self._output(f"{name}_reconstructed.txt"), profile))
            result.report["reconstruct.g0.max_abs"] = g0.sup_norm
            if reference is not None:
                result.report["reconstruct.relative_error"] = _reference_error(g0.samples, ys, reference)
        else:
            boundary_phase = 0.0
            if g_paths:
                data = self.read_boundary(g_paths)
                boundary_phase = boundary_gauge(data.g0, data.g1, data.g2)
            else:
                logger.warning("No boundary data given; h_L is reconstructed with a zero boundary phase")
            if xs[0] != 0:
                raise InputError("reconstruction grids start at x = 0")
            hL = reconstruct_hL(m12[0], hx, boundary_phase)
            result.outputs.append(write_profile(self._output("hL_reconstructed.txt"), hL))
            result.report["reconstruct.hL.max_abs"] = hL.sup_norm
            if reference is not None:
                result.report["reconstruct.relative_error"] = _reference_error(hL.samples, xs, reference)
        return result

    def _reconstruct_field(self, result, m12, m21, xs, ys, hx, hy, problem, reference):
        if xs[0] != 0 or ys[0] != 0:
            raise InputError("reconstruction grids start at the origin")
        field_ = reconstruct_u(m12, hx, hy)
        result.report["reconstruct.iterations"] = field_.iterations
        result.report["reconstruct.modulus_drift"] = field_.modulus_drift
        result.report["reconstruct.u.max_abs"] = float(np.max(np.abs(field_.u)))
        if problem == "x":
            profile = Profile(tag="x", h=hx, samples=field_.u[0])
            result.outputs.append(write_profile(self._output("u0_reconstructed.txt"), profile))
        else:
            result.outputs.append(write_field(self._output("u_reconstructed.txt"), field_.as_field()))
            if field_.u.shape[0] >= 3 and field_.u.shape[1] >= 3:
                result.report["reconstruct.consistency_gradient"] = consistency_gradient(field_.u, m21, hx, hy)
        if reference is not None:
            result.report["reconstruct.relative_error"] = _reference_error(field_.u[0], xs, reference)

    # Oracle

    def oracle(self, u0_path, manufactured: bool = False, levels: int = 3) -> ServiceResult:
        if manufactured:
            return self._manufactured(levels)
        u0 = self.read_initial(u0_path)
        L, hy = self.config.L, self.config.hy
        stride = _stride(int(round(L / hy)))
        field_ = evolve(u0, L, hy=hy, stride=stride)
        result = ServiceResult()
        result.outputs.append(write_field(self._output("field.txt"), field_))
        result.report.update({
            "oracle.nx": field_.nx,
            "oracle.ny": field_.ny,
            "oracle.hx": field_.hx,
            "oracle.hy": field_.hy,
            "oracle.max_abs": float(np.max(np.abs(field_.samples))),
        })
        result.report.update(self._lax_residuals(field_))
        return result

    def _lax_residuals(self, field_: FieldGrid, prefix: str = "oracle") -> dict:
        report = {}
        try:
            report[f"{prefix}.zero_curvature_residual"] = zero_curvature_residual(field_)
            report[f"{prefix}.conservation_residual"] = conservation_residual(field_)
            report[f"{prefix}.closedness_residual"] = closedness_residual(field_)
        except InputError as e:
            logger.error(f"Error in _lax_residuals: {str(e)}")
        return report

    def _manufactured(self, levels: int) -> ServiceResult:
        """Refinement table for the forced problem plus Lax-pair residual ratios of the unforced one."""
        if levels < 2:
            raise InputError("a convergence table needs at least two levels", levels=levels)
        solution = ManufacturedSolution()
        L, x_max = self.config.L, self.config.x_max
        base_steps = int(round(L / self.config.hy))
        base_stride = _stride(base_steps, STORED_LEVELS // 4)
        result = ServiceResult()
        errors, residuals = [], []
        for k in range(levels):
            hx, hy = self.config.hx / 2 ** k, self.config.hy / 4 ** k
            stride = base_stride * 2 ** k
            field_, error = evolve_manufactured(solution, x_max, L, hx, hy, stride)
            errors.append(error)
            result.report[f"manufactured.level{k}.hx"] = hx
            result.report[f"manufactured.level{k}.hy"] = hy
            result.report[f"manufactured.level{k}.error"] = error
            if k:
                result.report[f"manufactured.level{k}.order"] = (
                    math.log2(errors[k - 1] / error) if error > 0 and errors[k - 1] > 0 else math.nan
                )

            n = int(round(x_max / hx)) + 1
            u0 = Profile(tag="x", h=hx, samples=solution(hx * np.arange(n), 0.0))
            free = evolve(u0, L, hy=hy, stride=stride)
            residuals.append(self._lax_residuals(free, prefix=f"manufactured.level{k}"))
            result.report.update(residuals[-1])
        result.outputs.append(write_field(self._output("field.txt"), field_))

        for name in ("zero_curvature_residual", "conservation_residual", "closedness_residual"):
            coarse = residuals[-2].get(f"manufactured.level{levels - 2}.{name}")
            fine = residuals[-1].get(f"manufactured.level{levels - 1}.{name}")
            if coarse is not None and fine is not None:
                result.report[f"manufactured.{name}.ratio"] = convergence_ratio(coarse, fine)
        return result

    def traces(self, field_path) -> ServiceResult:
        field_ = read_field(field_path)
        traces = extract_traces(field_)
        result = ServiceResult()
        for name in ("u0", "g0", "g1", "g2", "hL"):
            result.outputs.append(write_profile(self._output(f"{name}.txt"), getattr(traces, name)))
        result.report.update({
            "traces.L": traces.g0.length,
            "traces.x_max": traces.u0.length,
            "traces.g0.max_abs": traces.g0.sup_norm,
        })
        result.report.update(compatibility_check(traces.u0, traces.g0, traces.g1, traces.g2))
        return result
