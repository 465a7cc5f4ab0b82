"""
Lax pair of the complex Sharma-Tasso-Olver equation

    u_y = -1/2 u_xxx + 3i/2 (u u_x)_x + 3/2 u^2 u_x

and the objects derived from it: the gauge-transformed coefficient matrices
N1, N2 and the closed one-form Delta.

All assemblers broadcast over array arguments and return arrays of shape
(..., 2, 2).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from common.exceptions import InputError
from common.formats import FieldGrid

logger = logging.getLogger(__name__)

SIGMA3 = np.diag([1.0, -1.0]).astype(complex)
SAMPLE_LAMBDAS = np.array([0.7, 0.5 + 0.5j, 1.2j, 0.9 * np.exp(1j * np.pi / 5)])


@dataclass(frozen=True)
class FieldJet:
    u: complex
    u_x: complex = 0.0
    u_xx: complex = 0.0


@dataclass(frozen=True)
class OneFormSample:
    delta1: complex
    delta2: complex


def _matrix(m11, m12, m21, m22) -> np.ndarray:
    m11, m12, m21, m22 = np.broadcast_arrays(*(np.asarray(m, dtype=complex) for m in (m11, m12, m21, m22)))
    out = np.empty(m11.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = m11
    out[..., 0, 1] = m12
    out[..., 1, 0] = m21
    out[..., 1, 1] = m22
    return out


def assemble_U(jet: FieldJet, lam) -> np.ndarray:
    u = np.asarray(jet.u, dtype=complex)
    lam = np.asarray(lam, dtype=complex)
    lam2 = lam * lam
    diag = -1j * lam2 - 0.5j * u
    return _matrix(diag, lam * u, 2 * lam * np.ones_like(u), -diag)


def _v_entries(u, u_x, u_xx, lam):
    lam2 = lam * lam
    lam3, lam4, lam5 = lam2 * lam, lam2 * lam2, lam2 * lam2 * lam
    v11 = (-2j * lam4 * lam2 - 2j * lam4 * u + lam2 * (u_x - 1j * u * u)
           + 0.25j * u_xx + 0.75 * u * u_x - 0.25j * u ** 3)
    v12 = 2 * lam5 * u + lam3 * (1j * u_x + u * u) + lam * (-0.5 * u_xx + 1.5j * u * u_x + 0.5 * u ** 3)
    v21 = 4 * lam5 + 2 * lam3 * u + lam * (1j * u_x + u * u)
    return v11, v12, v21


def assemble_V(jet: FieldJet, lam) -> np.ndarray:
    u, u_x, u_xx = (np.asarray(v, dtype=complex) for v in (jet.u, jet.u_x, jet.u_xx))
    v11, v12, v21 = _v_entries(u, u_x, u_xx, np.asarray(lam, dtype=complex))
    return _matrix(v11, v12, v21, -v11)


def delta_one_form(jet: FieldJet) -> OneFormSample:
    u, u_x, u_xx = jet.u, jet.u_x, jet.u_xx
    return OneFormSample(
        delta1=0.5 * u,
        delta2=-0.25 * u_xx + 0.75j * u * u_x + 0.25 * u ** 3,
    )


def delta2_boundary(g0, g1, g2):
    """Delta_2 on the line x = 0, where (u, u_x, u_xx) = (g0, g1, g2)."""
    return delta_one_form(FieldJet(g0, g1, g2)).delta2


def assemble_N1(u0_value, gauge_integral, lam) -> np.ndarray:
    u = np.asarray(u0_value, dtype=complex)
    lam = np.asarray(lam, dtype=complex)
    phase = np.exp(2j * np.asarray(gauge_integral, dtype=complex))
    return _matrix(-1j * u, lam * u / phase, 2 * lam * phase, 1j * u)


def assemble_N2(g0, g1, g2, gauge_integral, lam) -> np.ndarray:
    u, u_x, u_xx = (np.asarray(v, dtype=complex) for v in (g0, g1, g2))
    lam = np.asarray(lam, dtype=complex)
    lam2 = lam * lam
    n11 = (-2j * lam2 * lam2 * u + lam2 * (u_x - 1j * u * u)
           + 0.5j * u_xx + 1.5 * u * u_x - 0.5j * u ** 3)
    _, v12, v21 = _v_entries(u, u_x, u_xx, lam)
    phase = np.exp(2j * np.asarray(gauge_integral, dtype=complex))
    return _matrix(n11, v12 / phase, v21 * phase, -n11)


def _check_grid(field: FieldGrid):
    if field.nx < 3 or field.ny < 3:
        raise InputError("residual checks need at least 3 grid points per direction", nx=field.nx, ny=field.ny)


def x_derivatives(field: FieldGrid) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    u = field.samples
    u_x = np.gradient(u, field.hx, axis=1, edge_order=2)
    u_xx = np.gradient(u_x, field.hx, axis=1, edge_order=2)
    u_xxx = np.gradient(u_xx, field.hx, axis=1, edge_order=2)
    return u_x, u_xx, u_xxx


def _interior(values: np.ndarray) -> np.ndarray:
    """Drop points whose stencils reach the grid edge."""
    return values[1:-1, 3:-3] if values.shape[1] > 6 else values[1:-1, 1:-1]


def zero_curvature_residual(field: FieldGrid, lambdas=SAMPLE_LAMBDAS) -> float:
    _check_grid(field)
    u = field.samples
    u_x, u_xx, _ = x_derivatives(field)
    worst = 0.0
    for lam in lambdas:
        U = assemble_U(FieldJet(u), lam)
        V = assemble_V(FieldJet(u, u_x, u_xx), lam)
        U_y = np.gradient(U, field.hy, axis=0, edge_order=2)
        V_x = np.gradient(V, field.hx, axis=1, edge_order=2)
        residual = U_y - V_x + U @ V - V @ U
        interior = _interior(np.abs(residual).max(axis=(-2, -1)))
        if interior.size:
            worst = max(worst, float(interior.max()))
    return worst


def conservation_flux(u, u_x, u_xx):
    return -0.5 * u_xx + 1.5j * u * u_x + 0.5 * u ** 3


def conservation_residual(field: FieldGrid) -> float:
    _check_grid(field)
    u = field.samples
    u_x, u_xx, _ = x_derivatives(field)
    u_y = np.gradient(u, field.hy, axis=0, edge_order=2)
    flux_x = np.gradient(conservation_flux(u, u_x, u_xx), field.hx, axis=1, edge_order=2)
    interior = _interior(np.abs(u_y - flux_x))
    return float(interior.max()) if interior.size else 0.0


def closedness_residual(field: FieldGrid) -> float:
    """max |d_y Delta_1 - d_x Delta_2| over the interior."""
    _check_grid(field)
    u = field.samples
    u_x, u_xx, _ = x_derivatives(field)
    form = delta_one_form(FieldJet(u, u_x, u_xx))
    d1_y = np.gradient(form.delta1, field.hy, axis=0, edge_order=2)
    d2_x = np.gradient(form.delta2, field.hx, axis=1, edge_order=2)
    interior = _interior(np.abs(d1_y - d2_x))
    return float(interior.max()) if interior.size else 0.0


def convergence_ratio(coarse: float, fine: float) -> float:
    if fine == 0.0:
        return float("inf") if coarse > 0 else float("nan")
    return coarse / fine
