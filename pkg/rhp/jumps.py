"""
Jump matrices on the rays of the spectral contour.

Rays are oriented outward, M_+ is the limit from the counterclockwise side and
M_+ = M_- J. E stands for exp(2i theta). Hatted values are the first-column
entries of S1 = [[a_hat, b], [b_hat, a]], S2 = [[A_hat, B], [B_hat, A]] and
S3 = [[alpha_hat, beta], [beta_hat, alpha]].
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from common.exceptions import InputError, SingularJumpError
from spectral.analysis import derive_alpha_beta
from spectral.contour import NUM_RAYS, Contour, classify, theta
from spectral.direct import SpectralTable

logger = logging.getLogger(__name__)

SINGULAR_DENOMINATOR = 1e-12
FAMILIES = ("principal", "x", "y", "L")
FAMILY_RAYS = {
    "principal": tuple(range(NUM_RAYS)),
    "x": (0, 3, 6, 9),
    "y": tuple(range(NUM_RAYS)),
    "L": (0, 3, 6, 9),
}
# Spectral values each family can read at a node; ray_inputs narrows this per ray.
FAMILY_INPUTS = {
    "principal": ("a", "a_hat", "b", "b_hat", "B", "B_hat", "alpha", "alpha_hat"),
    "x": ("a", "a_hat", "b", "b_hat"),
    "y": ("A", "A_hat", "B", "B_hat"),
    "L": ("alpha", "alpha_hat", "beta", "beta_hat"),
}


def ray_inputs(family: str, ray: int) -> tuple[str, ...]:
    """The values the jump on this ray depends on."""
    if family != "principal":
        return FAMILY_INPUTS[family]
    if ray % 3 == 0:
        return ("a", "a_hat", "b", "b_hat")
    if ray % 6 in (1, 2):
        return ("a", "B_hat", "alpha_hat")
    return ("a_hat", "B", "alpha")


def _stack(m11, m12, m21, m22) -> np.ndarray:
    m11, m12, m21, m22 = np.broadcast_arrays(*(np.asarray(m, dtype=complex) for m in (m11, m12, m21, m22)))
    out = np.empty(m11.shape + (2, 2), dtype=complex)
    out[..., 0, 0], out[..., 0, 1], out[..., 1, 0], out[..., 1, 1] = m11, m12, m21, m22
    return out


def _inverse(J: np.ndarray) -> np.ndarray:
    """Inverse of unit-determinant matrices."""
    return _stack(J[..., 1, 1], -J[..., 0, 1], -J[..., 1, 0], J[..., 0, 0])


def _guard(values: dict, name: str):
    v = np.asarray(values[name])
    small = np.abs(v) < SINGULAR_DENOMINATOR
    if np.any(small):
        raise SingularJumpError(name, complex(v[small][0]))


def _reflection_jump(p, q, E) -> np.ndarray:
    """[[1, p/E], [-q E, 1 - p q]]"""
    return _stack(1.0, p / E, -q * E, 1.0 - p * q)


def family_matrix(family: str, ray: int, values: dict, lam, x: float, y: float) -> np.ndarray:
    """
    Jump matrices of one family on one ray, vectorized over lam.

    Args:
        family: 'principal', 'x', 'y' or 'L'
        ray: ray index 0..11
        values: spectral values at lam keyed as in FAMILY_INPUTS
        lam: points on the ray
        x, y: evaluation point; the x-problem ignores y, the y-problem ignores x
            and the L-problem reads y as L

    Returns:
        Array of shape lam.shape + (2, 2)
    """
    if family not in FAMILIES:
        raise InputError(f"unknown jump family {family!r}")
    if ray not in FAMILY_RAYS[family]:
        raise InputError(f"ray {ray} carries no {family} jump")
    lam = np.asarray(lam, dtype=complex)
    if family == "x":
        y = 0.0
    elif family == "y":
        x = 0.0
    E = np.exp(2j * theta(lam, x, y))

    if family in ("principal", "x") and ray % 3 == 0:
        _guard(values, "a")
        _guard(values, "a_hat")
        J = _reflection_jump(values["b"] / values["a"], values["b_hat"] / values["a_hat"], E)
        return J if ray % 6 == 0 else _inverse(J)
    if family == "principal" and ray % 6 in (1, 2):
        _guard(values, "a")
        _guard(values, "alpha_hat")
        a = values["a"]
        J = _stack(a, 0.0, -(values["B_hat"] / values["alpha_hat"]) * E, 1.0 / a)
        return J if ray % 6 == 2 else _inverse(J)
    if family == "principal":
        _guard(values, "a_hat")
        _guard(values, "alpha")
        a_hat = values["a_hat"]
        J = _stack(a_hat, (values["B"] / values["alpha"]) / E, 0.0, 1.0 / a_hat)
        return J if ray % 6 == 4 else _inverse(J)
    if family == "y":
        _guard(values, "A")
        _guard(values, "A_hat")
        J = _reflection_jump(values["B"] / values["A"], values["B_hat"] / values["A_hat"], E)
        return J if ray % 2 == 0 else _inverse(J)
    _guard(values, "alpha")
    _guard(values, "alpha_hat")
    J = _reflection_jump(-values["beta"] / values["alpha_hat"], -values["beta_hat"] / values["alpha"], E)
    return J if ray % 6 == 0 else _inverse(J)


def composite_J4(values: dict, lam, x: float, y: float) -> np.ndarray:
    """J2 J1^-1 J3: carries the D2 representation of M to the D5 one."""
    J1 = family_matrix("principal", 0, values, lam, x, y)
    J2 = family_matrix("principal", 2, values, lam, x, y)
    J3 = family_matrix("principal", 4, values, lam, x, y)
    return J2 @ _inverse(J1) @ J3


def _with_derived(table: SpectralTable, family: str) -> SpectralTable:
    if family in ("principal", "L") and not {"alpha", "alpha_hat"} <= set(table.columns):
        return derive_alpha_beta(table).table
    return table


def spectral_values(table: SpectralTable, names, indices) -> dict:
    return {name: table.column(name)[indices] for name in names}


@dataclass
class JumpAssembly:
    """Jumps of one family on a contour, from a spectral table or from a callable."""

    family: str
    contour: Contour
    table: Optional[SpectralTable] = None
    function: Optional[Callable] = None
    values: dict = field(default_factory=dict)

    def evaluate(self, x: float, y: float) -> np.ndarray:
        """Jumps at the flat contour nodes, shape (size, 2, 2)."""
        if self.function is not None:
            return np.asarray(self.function(self.contour, x, y), dtype=complex).reshape(self.contour.size, 2, 2)
        blocks = []
        for k, ray in enumerate(self.contour.rays):
            blocks.append(family_matrix(self.family, ray, self.values[ray], self.contour.nodes[k], x, y))
        return np.concatenate(blocks)

    def determinant_defect(self, x: float, y: float) -> float:
        J = self.evaluate(x, y)
        det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        return float(np.max(np.abs(det - 1)))

    def truncation_defect(self, x: float, y: float) -> float:
        """|J - I| at the outermost node of every ray; the jump is taken as I beyond it."""
        J = self.evaluate(x, y).reshape(self.contour.num_rays, self.contour.nodes_per_ray, 2, 2)
        return float(np.max(np.abs(J[:, -1] - np.eye(2))))

    @classmethod
    def from_function(cls, contour: Contour, function: Callable, family: str = "custom") -> "JumpAssembly":
        return cls(family=family, contour=contour, function=function)


def build_assembly(family: str, table: SpectralTable, contour: Optional[Contour] = None) -> JumpAssembly:
    if family not in FAMILIES:
        raise InputError(f"unknown jump family {family!r}")
    table = _with_derived(table, family)
    base = contour or table.contour()
    contour = base.restrict(FAMILY_RAYS[family])
    values = {}
    for ray in contour.rays:
        idx = table.on_ray(ray)
        if idx.size != contour.nodes_per_ray:
            raise InputError("spectral table does not match the contour", ray=ray, nodes=idx.size)
        values[ray] = spectral_values(table, ray_inputs(family, ray), idx)
        for name, v in values[ray].items():
            if not np.all(np.isfinite(v)):
                raise InputError(f"{name} is missing on ray {ray}; scatter both data sets first")
    logger.debug(f"Assembled {family} jumps on rays {contour.rays}")
    return JumpAssembly(family=family, contour=contour, table=table, values=values)


def assemble_jump(family: str, table: SpectralTable, x: float, y: float, lam: complex) -> np.ndarray:
    """Single jump matrix at lam on the family's contour, interpolating the table along the ray."""
    location = classify(lam)
    if not location.on_contour:
        raise InputError("lam is off the contour", lam=lam)
    table = _with_derived(table, family)
    values = {}
    for name in ray_inputs(family, location.ray):
        values[name] = table.value(name, lam)
    return family_matrix(family, location.ray, values, np.asarray(lam), x, y)
