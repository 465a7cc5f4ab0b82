"""
Spectral analysis on top of a SpectralTable: the derived functions alpha, beta,
c_plus, the global relation, zero search and residue data for the solver.
"""

from __future__ import annotations

import cmath
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np

from common.exceptions import InputError, NumericalError
from common.formats import dump_records, read_records

from .contour import classify
from .direct import PARITY, SpectralTable

logger = logging.getLogger(__name__)

SMALL_A = 1e-12
SIMPLE_ZERO = 1e-8
DEGENERATE_RESIDUE = 1e-10
NEWTON_TOLERANCE = 1e-10
DERIVATIVE_STEP = 1e-6
# Irrational split fraction so that zeros rarely land on a subdivision edge.
SPLIT = 0.5 + 1 / (10 * math.pi)


def _finite_max(values: np.ndarray) -> float:
    values = np.abs(values)
    values = values[np.isfinite(values)]
    return float(values.max()) if values.size else 0.0


@dataclass
class DerivedSpectral:
    table: SpectralTable
    flagged: np.ndarray
    det_s1_defect: float
    det_s2_defect: float
    det_s3_defect: float
    transfer_det_defect: float

    @property
    def alpha(self) -> np.ndarray:
        return self.table.column("alpha")

    @property
    def beta(self) -> np.ndarray:
        return self.table.column("beta")

    @property
    def c_plus(self) -> np.ndarray:
        return self.table.column("c_plus")

    def report(self) -> dict:
        return {
            "flagged_samples": int(self.flagged.size),
            "det_s1_defect": self.det_s1_defect,
            "det_s2_defect": self.det_s2_defect,
            "det_s3_defect": self.det_s3_defect,
            "transfer_det_defect": self.transfer_det_defect,
        }


SCATTERING_COLUMNS = ("a", "b", "a_hat", "b_hat", "A", "B", "A_hat", "B_hat")


def _resolve_L(table: SpectralTable, L: Optional[float]) -> float:
    if L is not None:
        return float(L)
    if "L" not in table.metadata:
        raise InputError("L is neither given nor recorded in the table")
    return float(table.metadata["L"])


def derive_alpha_beta(table: SpectralTable, L: Optional[float] = None) -> DerivedSpectral:
    """
    S3 = S1^-1 S2 = [[alpha_hat, beta], [beta_hat, alpha]] entry by entry, and c_plus.

    Each entry is finite only where its factors are: alpha needs Im lam^2 <= 0
    and Im lam^6 >= 0, alpha_hat the opposite signs; all four exist on the
    real and imaginary axes.
    """
    for name in SCATTERING_COLUMNS:
        if not table.has(name):
            raise InputError(f"spectral table lacks column {name}")
    L = _resolve_L(table, L)

    a, b, a_hat, b_hat, A, B, A_hat, B_hat = (table.column(n) for n in SCATTERING_COLUMNS)
    alpha = a_hat * A - b_hat * B
    beta = a * B - b * A
    alpha_hat = a * A_hat - b * B_hat
    beta_hat = a_hat * B_hat - b_hat * A_hat

    lam6 = table.lam ** 6
    upper = lam6.imag >= -1e-9 * np.maximum(np.abs(lam6), 1.0)
    c_plus = np.where(upper, beta * np.exp(-4j * lam6 * L), np.nan)

    out = SpectralTable(table.lam, table.ray_or_sector, table.node, dict(table.columns), dict(table.metadata))
    out.columns.update({
        "alpha": alpha, "beta": beta, "alpha_hat": alpha_hat, "beta_hat": beta_hat, "c_plus": c_plus,
    })

    transfer_defect = math.nan
    if table.has("T11"):
        T11, T12, T21, T22 = (table.column(n) for n in ("T11", "T12", "T21", "T22"))
        transfer_defect = _finite_max(T11 * T22 - T12 * T21 - 1)

    flagged = np.flatnonzero(np.abs(a) < SMALL_A)
    derived = DerivedSpectral(
        table=out,
        flagged=flagged,
        det_s1_defect=_finite_max(a * a_hat - b * b_hat - 1),
        det_s2_defect=_finite_max(A * A_hat - B * B_hat - 1),
        det_s3_defect=_finite_max(alpha * alpha_hat - beta * beta_hat - 1),
        transfer_det_defect=transfer_defect,
    )
    if flagged.size:
        logger.warning(f"{flagged.size} samples with |a| < {SMALL_A}")
    return derived


@dataclass(frozen=True)
class GlobalRelationReport:
    """
    |aB - bA| where exp(4i lam^6 L) has decayed below the threshold.

    For a compatible pairing aB - bA = exp(4i lam^6 L) c_plus with c_plus
    bounded, so the residual sits at the decay level; an unrelated pairing
    leaves it at the size of b and B.
    """

    residual: float
    scale: float
    decay: float
    samples: int

    @property
    def relative_residual(self) -> float:
        return self.residual / self.scale if self.scale > 0 else self.residual

    def report(self) -> dict:
        return {
            "global_relation.residual": self.residual,
            "global_relation.scale": self.scale,
            "global_relation.relative_residual": self.relative_residual,
            "global_relation.decay": self.decay,
            "global_relation.samples": self.samples,
        }


# radial lines of D1 and D3: Im lam^2 > 0 and Im lam^6 > 0
GLOBAL_RELATION_LINES = (-1, -3)
GLOBAL_RELATION_DECAY = 1e-3


def global_relation_residual(
    table: SpectralTable, L: Optional[float] = None, decay: float = GLOBAL_RELATION_DECAY,
) -> GlobalRelationReport:
    """
    Global relation residual on the interior lines of D1 and D3.

    Samples with exp(-4 Im lam^6 L) <= decay are used; when the table radius is
    too small for that, the outermost sample of each line is.
    """
    empty = GlobalRelationReport(math.nan, math.nan, math.nan, 0)
    try:
        derived = derive_alpha_beta(table, L)
        L = _resolve_L(table, L)
    except InputError as e:
        logger.error(f"Error in global_relation_residual: {str(e)}")
        return empty

    beta = derived.beta
    weight = np.exp(-4 * (table.lam ** 6).imag * L)
    usable = np.isin(table.ray_or_sector, GLOBAL_RELATION_LINES) & np.isfinite(beta)
    if not np.any(usable):
        logger.warning("No interior samples in D1 or D3; the global relation was not measured")
        return empty
    picks = usable & (weight <= decay)
    if not np.any(picks):
        picks = usable & (table.node == table.node[usable].max())
        logger.warning(f"exp(-4 Im lam^6 L) stays above {decay} on the table; using the outermost samples")

    b, B = table.column("b"), table.column("B")
    return GlobalRelationReport(
        residual=_finite_max(beta[picks]),
        scale=max(_finite_max(b[picks]), _finite_max(B[picks])),
        decay=float(np.max(weight[picks])),
        samples=int(np.count_nonzero(picks)),
    )


# Zero search


@dataclass(frozen=True)
class AnnularSector:
    """{r0 <= |lam| <= r1, phi0 <= arg lam <= phi1}; also serves as a disk or a wedge."""

    r0: float
    r1: float
    phi0: float
    phi1: float

    def boundary(self, n: int) -> np.ndarray:
        """Closed, counterclockwise sample of the boundary, first point repeated at the end."""
        t = np.linspace(0, 1, n, endpoint=False)
        pieces = [
            (self.r0 + (self.r1 - self.r0) * t) * cmath.exp(1j * self.phi0),
            self.r1 * np.exp(1j * (self.phi0 + (self.phi1 - self.phi0) * t)),
            (self.r1 + (self.r0 - self.r1) * t) * cmath.exp(1j * self.phi1),
        ]
        if self.r0 > 0:
            pieces.append(self.r0 * np.exp(1j * (self.phi1 + (self.phi0 - self.phi1) * t)))
        points = np.concatenate(pieces)
        return np.concatenate([points, points[:1]])

    def contains(self, lam: complex, margin: float = 0.0) -> bool:
        r = abs(lam)
        arg = math.atan2(lam.imag, lam.real)
        while arg < self.phi0 - margin:
            arg += 2 * math.pi
        return (self.r0 - margin <= r <= self.r1 + margin) and arg <= self.phi1 + margin

    @property
    def center(self) -> complex:
        return 0.5 * (self.r0 + self.r1) * cmath.exp(0.5j * (self.phi0 + self.phi1))

    def split(self) -> list["AnnularSector"]:
        rm = self.r0 + SPLIT * (self.r1 - self.r0)
        pm = self.phi0 + SPLIT * (self.phi1 - self.phi0)
        return [
            AnnularSector(self.r0, rm, self.phi0, pm),
            AnnularSector(self.r0, rm, pm, self.phi1),
            AnnularSector(rm, self.r1, self.phi0, pm),
            AnnularSector(rm, self.r1, pm, self.phi1),
        ]


def sector_region(first_sector: int, last_sector: int, radius: float) -> AnnularSector:
    """Wedge covering sectors first..last (1-based, arguments in [0, pi))."""
    return AnnularSector(0.0, radius, (first_sector - 1) * math.pi / 6, last_sector * math.pi / 6)


def winding_count(f: Callable, region: AnnularSector, samples: int = 64, max_doublings: int = 6) -> int:
    """Number of zeros of f inside region by the argument principle."""
    for _ in range(max_doublings + 1):
        values = np.asarray(f(region.boundary(samples)), dtype=complex)
        if not np.all(np.isfinite(values)) or np.any(values == 0):
            raise NumericalError("function vanishes or is undefined on a search boundary", region=region)
        steps = np.angle(values[1:] / values[:-1])
        if np.max(np.abs(steps)) < math.pi / 3:
            return int(round(steps.sum() / (2 * math.pi)))
        samples *= 2
    raise NumericalError("argument could not be resolved on a search boundary", region=region)


def derivative(f: Callable, lam: complex, step: float = DERIVATIVE_STEP) -> complex:
    values = np.asarray(f(np.array([lam + step, lam - step])), dtype=complex)
    return complex((values[0] - values[1]) / (2 * step))


def newton(f: Callable, start: complex, tolerance: float = NEWTON_TOLERANCE, max_iterations: int = 40) -> Optional[complex]:
    z = complex(start)
    for _ in range(max_iterations):
        value = complex(np.asarray(f(np.array([z])))[0])
        if abs(value) < tolerance:
            return z
        slope = derivative(f, z)
        if slope == 0:
            return None
        z -= value / slope
    value = complex(np.asarray(f(np.array([z])))[0])
    return z if abs(value) < tolerance else None


@dataclass(frozen=True)
class Zero:
    location: complex
    function: str
    derivative: complex
    sector: Optional[int]
    partners: dict = field(default_factory=dict)

    def negated(self) -> "Zero":
        """The parity image at -location."""
        parity = PARITY.get(self.function, 1)
        partners = {k: PARITY.get(k, 1) * v for k, v in self.partners.items()}
        return Zero(-self.location, self.function, -parity * self.derivative, self.sector, partners)


def find_zeros(
    f: Callable,
    region: AnnularSector,
    function: str = "f",
    max_depth: int = 6,
    tolerance: float = NEWTON_TOLERANCE,
) -> list[Zero]:
    """
    Zeros of f in region: argument-principle counts on recursive subdivisions,
    each isolated zero polished by Newton iteration.

    Args:
        f: vectorized callable, array of lam -> array of values
        region: search region
        function: name recorded on each zero
        max_depth: subdivision depth before giving up
        tolerance: Newton stopping criterion on |f|

    Returns:
        Simple zeros with derivative values
    """
    total = winding_count(f, region)
    found: list[complex] = []
    pending = [(region, total, 0)] if total else []
    while pending:
        box, count, depth = pending.pop()
        if count == 1:
            z = newton(f, box.center, tolerance)
            if z is not None and box.contains(z, margin=1e-9 * max(box.r1, 1.0)):
                found.append(z)
                continue
        if depth >= max_depth:
            raise NumericalError("clustered or non-simple zeros", region=box, count=count)
        children = box.split()
        counts = [winding_count(f, child) for child in children]
        if sum(counts) != count:
            raise NumericalError("clustered or non-simple zeros", region=box, count=count, split=counts)
        pending.extend((child, c, depth + 1) for child, c in zip(children, counts) if c)

    zeros = []
    for z in found:
        slope = derivative(f, z)
        if abs(slope) <= SIMPLE_ZERO:
            raise NumericalError("clustered or non-simple zeros", location=z, derivative=abs(slope))
        sector = classify(z).sector if z != 0 else None
        zeros.append(Zero(z, function, slope, sector))
    logger.info(f"Found {len(zeros)} zeros of {function} (winding total {total})")
    return zeros


def far_field_certificate(f: Callable, radius: float, phi0: float, phi1: float, samples: int = 64) -> float:
    """max |f - 1| on the arc |lam| = radius; below 1/2 excludes zeros beyond it for f -> 1 at infinity."""
    arc = radius * np.exp(1j * np.linspace(phi0, phi1, samples))
    return _finite_max(np.asarray(f(arc)) - 1)


@dataclass
class ZeroSet:
    """
    Zeros of the spectral functions that divide M somewhere.

    a and alpha_hat live where Im lam^2 > 0, a_hat and alpha where
    Im lam^2 < 0; A where Im lam^6 > 0 and A_hat where Im lam^6 < 0.
    """

    a_zeros: list[Zero] = field(default_factory=list)
    a_hat_zeros: list[Zero] = field(default_factory=list)
    alpha_zeros: list[Zero] = field(default_factory=list)
    alpha_hat_zeros: list[Zero] = field(default_factory=list)
    A_zeros: list[Zero] = field(default_factory=list)
    A_hat_zeros: list[Zero] = field(default_factory=list)

    FAMILIES = ("a", "a_hat", "alpha", "alpha_hat", "A", "A_hat")

    def of(self, function: str) -> list[Zero]:
        return getattr(self, f"{function}_zeros")

    @property
    def count_a(self) -> int:
        return len(self.a_zeros)

    @property
    def count_alpha(self) -> int:
        return len(self.alpha_zeros)

    @property
    def empty(self) -> bool:
        return not any(self.of(name) for name in self.FAMILIES)

    def check_separated(self, tolerance: float = SIMPLE_ZERO):
        for first, second in (("a", "alpha_hat"), ("a_hat", "alpha")):
            for z in self.of(first):
                for e in self.of(second):
                    if abs(z.location - e.location) < tolerance:
                        raise NumericalError(f"zeros of {first} and {second} coincide", location=z.location)

    def report(self) -> dict:
        out = {}
        for name in self.FAMILIES:
            zeros = self.of(name)
            out[f"zeros.{name}.count"] = len(zeros)
            for i, z in enumerate(zeros):
                out[f"zeros.{name}.{i}"] = z.location
        return out


def with_negatives(zeros: Iterable[Zero]) -> list[Zero]:
    """Complete a list of zeros with their parity images."""
    out = []
    for z in zeros:
        out.append(z)
        if not any(abs(w.location + z.location) < SIMPLE_ZERO for w in out):
            out.append(z.negated())
    return out


@dataclass(frozen=True)
class Pole:
    """Res M^(column) at location = coefficient * exp(phase_sign * 2i theta(location)) * M^(other column)."""

    location: complex
    column: int
    coefficient: complex
    phase_sign: int

    def factor(self, x: float, y: float) -> complex:
        lam2 = self.location ** 2
        theta = lam2 * x + 2 * lam2 ** 3 * y
        return self.coefficient * cmath.exp(self.phase_sign * 2j * theta)


@dataclass
class ResidueData:
    context: str
    poles: list[Pole] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.poles)

    def dump(self) -> str:
        rows = [(p.column, p.phase_sign, p.location.real, p.location.imag, p.coefficient.real, p.coefficient.imag)
                for p in self.poles]
        return dump_records("residues", {"context": self.context},
                            ["column", "phase_sign", "re_lambda", "im_lambda", "re_coefficient", "im_coefficient"], rows)

    @classmethod
    def read(cls, path) -> "ResidueData":
        metadata, _, data = read_records(path, "residues")
        poles = [Pole(complex(r[2], r[3]), int(r[0]), complex(r[4], r[5]), int(r[1])) for r in data]
        return cls(metadata.get("context", "principal"), poles)


RESIDUE_CONTEXTS = ("principal", "x", "y", "L")
# sectors (upper half-plane labels) where M divides by a and by a_hat
PRINCIPAL_A_SECTORS = (1, 3)
PRINCIPAL_A_HAT_SECTORS = (4, 6)


def _partner(zero: Zero, name: str) -> complex:
    if name not in zero.partners:
        raise InputError(f"zero of {zero.function} at {zero.location} lacks the value of {name}")
    return complex(zero.partners[name])


def _pole(zero: Zero, column: int, numerator: str, phase_sign: int,
          denominator: Optional[str] = None, sign: int = 1) -> Pole:
    value = _partner(zero, numerator)
    if abs(value) < DEGENERATE_RESIDUE:
        raise NumericalError("degenerate residue", function=numerator, location=zero.location)
    scale = zero.derivative * (_partner(zero, denominator) if denominator else 1.0)
    return Pole(zero.location, column, sign * value / scale, phase_sign)


def residue_data(zeros: ZeroSet, context: str = "principal") -> ResidueData:
    """
    Residue conditions for the chosen problem.

    Partners expected on each zero: 'b' for zeros of a, 'b_hat' for zeros of
    a_hat; 'B' and 'a_hat' for zeros of alpha and 'B_hat' and 'a' for zeros of
    alpha_hat (principal); 'B' and 'B_hat' for zeros of A and A_hat; 'beta_hat'
    for zeros of alpha and 'beta' for zeros of alpha_hat (L-problem).
    """
    if context not in RESIDUE_CONTEXTS:
        raise InputError(f"unknown residue context {context!r}")
    poles: list[Pole] = []

    if context in ("principal", "x"):
        for z in zeros.a_zeros:
            if context == "x" or z.sector in PRINCIPAL_A_SECTORS:
                poles.append(Pole(z.location, 2, _partner(z, "b") / z.derivative, -1))
        for z in zeros.a_hat_zeros:
            if context == "x" or z.sector in PRINCIPAL_A_HAT_SECTORS:
                poles.append(Pole(z.location, 1, _partner(z, "b_hat") / z.derivative, 1))
    if context == "principal":
        # at alpha = 0, beta = B / a_hat; at alpha_hat = 0, beta_hat = B_hat / a
        poles += [_pole(z, 2, "B", -1, denominator="a_hat") for z in zeros.alpha_zeros]
        poles += [_pole(z, 1, "B_hat", 1, denominator="a") for z in zeros.alpha_hat_zeros]
    if context == "y":
        poles += [_pole(z, 2, "B", -1) for z in zeros.A_zeros]
        poles += [_pole(z, 1, "B_hat", 1) for z in zeros.A_hat_zeros]
    if context == "L":
        poles += [_pole(z, 1, "beta_hat", 1, sign=-1) for z in zeros.alpha_zeros]
        poles += [_pole(z, 2, "beta", -1, sign=-1) for z in zeros.alpha_hat_zeros]

    for p in poles:
        if not cmath.isfinite(p.coefficient):
            raise NumericalError("non-finite residue coefficient", location=p.location)
    return ResidueData(context, poles)
