"""
Riemann-Hilbert solver.

M = I + sum_p R_p / (lam - p) + C[M_- (J - I)], with C the Cauchy transform
over the truncated contour. Collocating the minus boundary value at the
quadrature nodes gives a dense linear system in M_- (one right-hand side per
row of M), optionally enlarged by the algebraic residue conditions.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import lu_factor, lu_solve
from scipy.linalg.lapack import zgecon

from common.exceptions import InputError, NumericalError
from spectral.analysis import ResidueData
from spectral.contour import RAY_DIRECTIONS, Contour

from .jumps import JumpAssembly

logger = logging.getLogger(__name__)

MAX_CONDITION = 1e12
MAX_RESIDUAL = 1e-6
POLE_SEPARATION = 1e-3
MAX_ORDER = 5
TWO_PI_I = 2j * np.pi


def principal_value_integrals(contour: Contour) -> np.ndarray:
    """PV integral of ds / (s - lam_i) over the truncated contour for every node."""
    nodes = contour.flat_nodes()
    rays = contour.ray_of_flat()
    R = contour.truncation_radius
    out = np.empty(nodes.size, dtype=complex)
    for i, (lam, ray) in enumerate(zip(nodes, rays)):
        r = abs(lam)
        total = np.log((R - r) / r)
        for other in contour.rays:
            if other != ray:
                total += np.log((R * RAY_DIRECTIONS[other] - lam) / (-lam))
        out[i] = total
    return out


def cauchy_minus_matrix(contour: Contour) -> np.ndarray:
    """
    Discrete minus boundary value of the Cauchy transform, acting on node values.

    Off-diagonal entries are plain quadrature; the diagonal singularity is
    removed by subtracting g(lam_i), integrating the constant exactly and
    replacing the removable point by the panel derivative of g.
    """
    nodes = contour.flat_nodes()
    dlam = contour.flat_dlam()
    N = nodes.size
    diff = nodes[None, :] - nodes[:, None]
    np.fill_diagonal(diff, 1.0)
    C = dlam[None, :] / diff
    np.fill_diagonal(C, 0.0)
    diagonal = principal_value_integrals(contour) - C.sum(axis=1)
    C[np.arange(N), np.arange(N)] = diagonal

    n = contour.nodes_per_ray
    weights = np.tile(contour.weights, contour.num_rays)
    blocks = contour.differentiation_blocks()
    for k in range(contour.num_rays):
        for idx, D in blocks:
            rows = k * n + idx
            C[np.ix_(rows, rows)] += weights[rows][:, None] * D
    C /= TWO_PI_I
    C[np.arange(N), np.arange(N)] -= 0.5
    return C


def cauchy_offcontour_matrix(contour: Contour, points) -> np.ndarray:
    points = np.atleast_1d(np.asarray(points, dtype=complex))
    return contour.flat_dlam()[None, :] / (contour.flat_nodes()[None, :] - points[:, None]) / TWO_PI_I


@dataclass
class RHPSolution:
    contour: Contour
    x: float
    y: float
    minus: np.ndarray
    plus: np.ndarray
    weighted: np.ndarray
    residues: Optional[ResidueData]
    pole_matrices: list = field(default_factory=list)
    residual: float = 0.0
    condition: float = 1.0
    det_defect: float = 0.0
    normalization_defect: float = 0.0
    truncation_defect: float = 0.0

    def evaluate(self, points) -> np.ndarray:
        """M at points off the contour, shape (len(points), 2, 2)."""
        points = np.atleast_1d(np.asarray(points, dtype=complex))
        Cp = cauchy_offcontour_matrix(self.contour, points)
        M = np.broadcast_to(np.eye(2, dtype=complex), points.shape + (2, 2)).copy()
        M += np.einsum("pj,jrc->prc", Cp, self.weighted)
        for pole, R in zip(self.residues.poles if self.residues else [], self.pole_matrices):
            M += R[None] / (points - pole.location)[:, None, None]
        return M

    def coefficient(self, order: int) -> np.ndarray:
        if not 1 <= order <= MAX_ORDER:
            raise InputError(f"coefficient order {order} is unsupported (1..{MAX_ORDER})")
        s = self.contour.flat_nodes()
        moment = np.einsum("j,jrc->rc", self.contour.flat_dlam() * s ** (order - 1), self.weighted)
        m = -moment / TWO_PI_I
        for pole, R in zip(self.residues.poles if self.residues else [], self.pole_matrices):
            m = m + R * pole.location ** (order - 1)
        return m

    def report(self) -> dict:
        m1 = self.coefficient(1)
        return {
            "x": self.x,
            "y": self.y,
            "residual": self.residual,
            "condition": self.condition,
            "det_drift": self.det_defect,
            "normalization_defect": self.normalization_defect,
            "truncation_defect": self.truncation_defect,
            "m1_11": complex(m1[0, 0]),
            "m1_12": complex(m1[0, 1]),
            "m1_21": complex(m1[1, 0]),
            "m1_22": complex(m1[1, 1]),
        }


def _check_poles(contour: Contour, residues: Optional[ResidueData]):
    if not residues:
        return
    nodes = contour.flat_nodes()
    for pole in residues.poles:
        gap = float(np.min(np.abs(nodes - pole.location)))
        angle_gap = abs(pole.location) * float(np.min(np.abs(np.angle(pole.location / contour.directions))))
        if min(gap, angle_gap) < POLE_SEPARATION:
            raise InputError("residue pole lies on the contour", location=pole.location)


def solve_rhp(
    assembly: JumpAssembly,
    residues: Optional[ResidueData],
    x: float,
    y: float,
    C: Optional[np.ndarray] = None,
) -> RHPSolution:
    """
    Solve for M_- at the contour nodes.

    Args:
        assembly: jump matrices of the problem
        residues: pole conditions, or None
        x, y: evaluation point
        C: precomputed cauchy_minus_matrix for the assembly contour, reused across (x, y)

    Returns:
        Both boundary values, the densities M_-(J - I) and solve diagnostics
    """
    contour = assembly.contour
    _check_poles(contour, residues)
    J = assembly.evaluate(x, y)
    if not np.all(np.isfinite(J)):
        raise NumericalError("non-finite jump matrix", x=x, y=y)
    W = J - np.eye(2)
    N = contour.size
    if C is None:
        C = cauchy_minus_matrix(contour)

    poles = residues.poles if residues else []
    P = len(poles)
    size = 2 * N + P
    A = np.zeros((size, size), dtype=complex)
    A[: 2 * N, : 2 * N] = np.eye(2 * N) - np.einsum("ij,jdc->icjd", C, W).reshape(2 * N, 2 * N)

    nodes = contour.flat_nodes()
    factors = [p.factor(x, y) for p in poles]
    if P:
        Cp = cauchy_offcontour_matrix(contour, [p.location for p in poles])
        for q, pole in enumerate(poles):
            c = pole.column - 1
            # collocation rows of column c see the pole term rho_q / (lam_i - p_q)
            A[np.arange(N) * 2 + c, 2 * N + q] -= 1.0 / (nodes - pole.location)
        for p, pole in enumerate(poles):
            other = 2 - pole.column
            row = 2 * N + p
            A[row, row] = 1.0
            A[row, : 2 * N] -= factors[p] * np.einsum("j,jd->jd", Cp[p], W[:, :, other]).reshape(2 * N)
            for q, partner in enumerate(poles):
                if partner.column - 1 == other and q != p:
                    A[row, 2 * N + q] -= factors[p] / (pole.location - partner.location)

    rhs = np.zeros((size, 2), dtype=complex)
    for r in range(2):
        rhs[np.arange(N) * 2 + r, r] = 1.0
        for p, pole in enumerate(poles):
            if 2 - pole.column == r:
                rhs[2 * N + p, r] = factors[p]

    lu = lu_factor(A, check_finite=False)
    rcond, info = zgecon(lu[0], np.linalg.norm(A, 1), norm="1")
    condition = 1.0 / rcond if rcond > 0 else np.inf
    if info != 0 or condition > MAX_CONDITION:
        raise NumericalError("ill-conditioned collocation system", condition=condition, x=x, y=y)
    solution = lu_solve(lu, rhs, check_finite=False)
    residual = float(np.max(np.abs(A @ solution - rhs)))
    if residual > MAX_RESIDUAL:
        raise NumericalError("collocation solve did not converge", residual=residual, condition=condition)

    # unknown (i, c) for row r of M
    minus = solution[: 2 * N].reshape(N, 2, 2).transpose(0, 2, 1)
    weighted = minus @ W
    plus = minus + weighted
    pole_matrices = []
    for p, pole in enumerate(poles):
        R = np.zeros((2, 2), dtype=complex)
        R[:, pole.column - 1] = solution[2 * N + p]
        pole_matrices.append(R)

    result = RHPSolution(
        contour=contour, x=x, y=y, minus=minus, plus=plus, weighted=weighted,
        residues=residues, pole_matrices=pole_matrices, residual=residual, condition=condition,
    )
    det = minus[:, 0, 0] * minus[:, 1, 1] - minus[:, 0, 1] * minus[:, 1, 0]
    result.det_defect = float(np.max(np.abs(det - 1)))
    far = contour.truncation_radius * np.exp(1j * (np.arange(12) + 0.5) * np.pi / 6)
    result.normalization_defect = float(np.max(np.abs(result.evaluate(far) - np.eye(2))))
    if assembly.function is None:
        result.truncation_defect = assembly.truncation_defect(x, y)
    logger.debug(f"RHP solved at x={x}, y={y}: residual={residual:.2e}, condition={condition:.2e}")
    return result


def extract_coefficients(solution: RHPSolution, order: int = MAX_ORDER) -> list[np.ndarray]:
    """m^(1) ... m^(order) of M = I + sum m^(j) / lam^j."""
    if not 1 <= order <= MAX_ORDER:
        raise InputError(f"coefficient order {order} is unsupported (1..{MAX_ORDER})")
    return [solution.coefficient(j) for j in range(1, order + 1)]
