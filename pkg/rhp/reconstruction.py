"""
Field values from large-lam coefficients of the solved problems.

Every map here is gauge coupled: the field enters its own phase through the
closed one-form Delta, so each reconstruction iterates to a fixed point.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import cumulative_trapezoid

from common.exceptions import InputError, NumericalError
from common.formats import FieldGrid, Profile
from spectral.lax_pair import FieldJet, delta_one_form

logger = logging.getLogger(__name__)

TOLERANCE = 1e-10
MAX_ITERATIONS = 50
DAMPING = 0.5


def _fixed_point(update: Callable, start, label: str):
    """
    Iterate start -> update(start), halving steps while successive updates grow.

    Returns:
        (fixed point, iteration count)
    """
    current = start
    previous_change = np.inf
    damping = 1.0
    for iteration in range(1, MAX_ITERATIONS + 1):
        proposal = update(current)
        step = [p - c for p, c in zip(proposal, current)]
        change = max(float(np.max(np.abs(s))) if np.size(s) else 0.0 for s in step)
        if not np.isfinite(change):
            raise NumericalError(f"{label}: fixed-point iterates diverged; reduce the amplitude or refine the grid")
        if change < TOLERANCE:
            return proposal, iteration
        if change > previous_change:
            damping *= DAMPING
        current = [c + damping * s for c, s in zip(current, step)]
        previous_change = change
    raise NumericalError(
        f"{label}: fixed-point iteration did not converge; reduce the amplitude or refine the grid",
        iterations=MAX_ITERATIONS, change=change,
    )


def _x_derivatives(u: np.ndarray, hx: float) -> tuple[np.ndarray, np.ndarray]:
    if u.shape[-1] < 3:
        raise InputError("reconstruction needs at least 3 points in x", nx=u.shape[-1])
    u_x = np.gradient(u, hx, axis=-1, edge_order=2)
    return u_x, np.gradient(u_x, hx, axis=-1, edge_order=2)


def gauge_integral(u: np.ndarray, hx: float, hy: float) -> np.ndarray:
    """Integral of Delta along (0, 0) -> (0, y) -> (x, y); u has rows indexed by y."""
    u_x, u_xx = _x_derivatives(u, hx)
    form = delta_one_form(FieldJet(u, u_x, u_xx))
    along_y = np.zeros(u.shape[0], dtype=complex)
    if u.shape[0] > 1:
        along_y = cumulative_trapezoid(form.delta2[:, 0], dx=hy, initial=0)
    along_x = cumulative_trapezoid(form.delta1, dx=hx, axis=1, initial=0)
    return along_y[:, None] + along_x


@dataclass(frozen=True)
class ReconstructionField:
    m: np.ndarray
    u: np.ndarray
    gauge: np.ndarray
    hx: float
    hy: float
    iterations: int

    @property
    def modulus_drift(self) -> float:
        """max | |u| - 2|m| exp(-2 Im gauge) |; zero up to rounding by construction."""
        return float(np.max(np.abs(np.abs(self.u) - 2 * np.abs(self.m) * np.exp(-2 * self.gauge.imag))))

    def as_field(self) -> FieldGrid:
        return FieldGrid(hx=self.hx, hy=self.hy, samples=self.u,
                         metadata={"iterations": self.iterations})


def reconstruct_u(m: np.ndarray, hx: float, hy: float = 1.0) -> ReconstructionField:
    """u = 2i m exp(2i int Delta[u]) on a grid whose rows are y levels."""
    m = np.atleast_2d(np.asarray(m, dtype=complex))

    def update(state):
        (u,) = state
        return [2j * m * np.exp(2j * gauge_integral(u, hx, hy))]

    (u,), iterations = _fixed_point(update, [2j * m], "reconstruct_u")
    gauge = gauge_integral(u, hx, hy)
    logger.debug(f"reconstruct_u converged in {iterations} iterations")
    return ReconstructionField(m=m, u=u, gauge=gauge, hx=hx, hy=hy, iterations=iterations)


def consistency_gradient(u: np.ndarray, m21: np.ndarray, hx: float, hy: float) -> float:
    """max |u_x - i u_y - 2 m21| over interior points; diagnostic only."""
    u = np.atleast_2d(np.asarray(u, dtype=complex))
    m21 = np.atleast_2d(np.asarray(m21, dtype=complex))
    try:
        if u.shape[0] < 3 or u.shape[1] < 3:
            raise InputError("consistency check needs a 3x3 grid at least", shape=u.shape)
        u_x = np.gradient(u, hx, axis=1, edge_order=2)
        u_y = np.gradient(u, hy, axis=0, edge_order=2)
        residual = np.abs(u_x - 1j * u_y - 2 * m21)[1:-1, 1:-1]
    except InputError as e:
        logger.error(f"Error in consistency_gradient: {str(e)}")
        return float("nan")
    value = float(residual.max()) if residual.size else 0.0
    logger.info(f"Consistency gradient residual: {value:.3e}")
    return value


def _boundary_update(m1, m2, m3, m4, m5, gauge):
    phase = np.exp(2j * gauge)
    g0 = 2j * m1[:, 0, 1] * phase
    g1 = (4 * m3[:, 0, 1] - 2 * g0 * m1[:, 0, 1]) * phase - 1j * g0 * (2 * m2[:, 1, 1] + g0)
    g2 = ((8j * m5[:, 0, 1] + 4j * g0 * m3[:, 0, 1] + 2 * (g1 - 1j * g0 ** 2) * m1[:, 0, 1]) * phase
          - g0 * (4 * m4[:, 1, 1] + 3j * g1 + g0 ** 2))
    return g0, g1, g2


def reconstruct_boundary(coefficients: np.ndarray, hy: float) -> tuple[Profile, Profile, Profile]:
    """
    Boundary values from the y-problem coefficients.

    Args:
        coefficients: shape (ny, 5, 2, 2), m^(1)..m^(5) at y = 0, hy, 2hy, ...
        hy: sample spacing in y

    Returns:
        g0, g1, g2 as y-profiles
    """
    coefficients = np.asarray(coefficients, dtype=complex)
    if coefficients.ndim != 4 or coefficients.shape[1:] != (5, 2, 2):
        raise InputError("boundary reconstruction needs m^(1)..m^(5) at every y", shape=coefficients.shape)
    m = [coefficients[:, j] for j in range(5)]

    def update(state):
        g0, g1, g2 = state
        delta2 = delta_one_form(FieldJet(g0, g1, g2)).delta2
        gauge = cumulative_trapezoid(delta2, dx=hy, initial=0)
        return list(_boundary_update(*m, gauge))

    start = list(_boundary_update(*m, np.zeros(coefficients.shape[0])))
    (g0, g1, g2), iterations = _fixed_point(update, start, "reconstruct_boundary")
    logger.debug(f"reconstruct_boundary converged in {iterations} iterations")
    return tuple(Profile(tag="y", h=hy, samples=g) for g in (g0, g1, g2))


def boundary_gauge(g0: Profile, g1: Profile, g2: Profile) -> float | complex:
    """Integral of Delta_2 along x = 0 over the whole boundary profile."""
    delta2 = delta_one_form(FieldJet(g0.samples, g1.samples, g2.samples)).delta2
    return complex(np.trapezoid(delta2, dx=g0.h))


def reconstruct_hL(m_L: np.ndarray, hx: float, boundary_phase: complex = 0.0) -> Profile:
    """
    u(x, L) from the L-problem coefficient m_L(x) = m^(1)_12.

    boundary_phase is the integral of Delta_2 along x = 0 from 0 to L.
    """
    m_L = np.asarray(m_L, dtype=complex)

    def update(state):
        (h,) = state
        along_x = cumulative_trapezoid(0.5 * h, dx=hx, initial=0)
        return [2j * m_L * np.exp(2j * (boundary_phase + along_x))]

    (h,), iterations = _fixed_point(update, [2j * m_L * np.exp(2j * boundary_phase)], "reconstruct_hL")
    logger.debug(f"reconstruct_hL converged in {iterations} iterations")
    return Profile(tag="x", h=hx, samples=h)
