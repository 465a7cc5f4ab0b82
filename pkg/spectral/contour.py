"""
Geometry of the spectral plane.

The contour is the union of twelve rays at angles k*pi/6, all oriented from
the origin outward. The plus side of a ray is its counterclockwise side.
Sectors D1..D6 are the open wedges between consecutive rays, repeated with
period pi.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.polynomial.legendre import leggauss

from common.exceptions import InputError
from common.formats import dump_records

logger = logging.getLogger(__name__)

NUM_RAYS = 12
RAY_TOLERANCE = 1e-10
R_MIN = 1e-3
# Largest radius ratio of one graded panel.
GRADING_RATIO = 6.0
NODES_PER_PANEL = 8

RAY_ANGLES = np.arange(NUM_RAYS) * math.pi / 6
RAY_DIRECTIONS = np.exp(1j * RAY_ANGLES)


@dataclass(frozen=True)
class Sector:
    index: int
    arg_range: tuple[float, float]

    def contains(self, lam: complex) -> bool:
        arg = math.atan2(lam.imag, lam.real) % math.pi
        lo, hi = self.arg_range
        return lo < arg < hi


SECTORS = tuple(Sector(i, ((i - 1) * math.pi / 6, i * math.pi / 6)) for i in range(1, 7))


@dataclass(frozen=True)
class Location:
    """Either a sector index 1..6 or a ray index 0..11, never both."""

    sector: Optional[int] = None
    ray: Optional[int] = None

    @property
    def on_contour(self) -> bool:
        return self.ray is not None


def classify(lam: complex) -> Location:
    lam = complex(lam)
    if lam == 0:
        raise InputError("origin is unclassifiable")
    if not (math.isfinite(lam.real) and math.isfinite(lam.imag)):
        raise InputError("spectral point must be finite", value=lam)
    arg = math.atan2(lam.imag, lam.real) % (2 * math.pi)
    k = round(arg / (math.pi / 6))
    if abs(arg - k * math.pi / 6) < RAY_TOLERANCE:
        return Location(ray=k % NUM_RAYS)
    return Location(sector=int((arg % math.pi) // (math.pi / 6)) + 1)


def theta(lam, x: float, y: float):
    lam = np.asarray(lam)
    lam2 = lam * lam
    return lam2 * x + 2 * lam2 ** 3 * y


def ray_sign_regions(lam) -> tuple[np.ndarray, np.ndarray]:
    """Signs of Im(lam^2) and Im(lam^6); these decide which eigenfunction columns stay bounded."""
    lam = np.asarray(lam, dtype=complex)
    lam2 = lam * lam
    return np.sign(lam2.imag), np.sign((lam2 ** 3).imag)


def panel_edges(radius: float, panels: int, r_min: float = R_MIN) -> np.ndarray:
    """Origin panel, geometric panels up to r_mid, then uniform panels to the radius."""
    if panels == 1:
        return np.array([0.0, radius])
    if panels < 3:
        return np.concatenate([[0.0], np.geomspace(min(r_min, radius / 2), radius, panels)])
    r_mid = min(1.0, radius / 2)
    graded = math.ceil(math.log(r_mid / r_min) / math.log(GRADING_RATIO)) if r_mid > r_min else 1
    graded = min(max(graded, 1), panels - 2)
    uniform = panels - 1 - graded
    inner = np.geomspace(r_min, r_mid, graded + 1)
    outer = np.linspace(r_mid, radius, uniform + 1)[1:]
    return np.concatenate([[0.0], inner, outer])


@dataclass(frozen=True)
class Contour:
    truncation_radius: float
    nodes_per_ray: int
    radii: np.ndarray
    weights: np.ndarray
    panel_of_node: np.ndarray
    edges: np.ndarray
    rays: tuple[int, ...] = tuple(range(NUM_RAYS))

    @property
    def num_rays(self) -> int:
        return len(self.rays)

    @property
    def angles(self) -> np.ndarray:
        return RAY_ANGLES[list(self.rays)]

    @property
    def directions(self) -> np.ndarray:
        return RAY_DIRECTIONS[list(self.rays)]

    @property
    def nodes(self) -> np.ndarray:
        """Shape (num_rays, nodes_per_ray)."""
        return self.directions[:, None] * self.radii[None, :]

    @property
    def dlam(self) -> np.ndarray:
        """Complex quadrature weights for integrals in dlam along the oriented rays."""
        return self.directions[:, None] * self.weights[None, :]

    @property
    def size(self) -> int:
        return self.num_rays * self.nodes_per_ray

    def flat_nodes(self) -> np.ndarray:
        return self.nodes.ravel()

    def flat_dlam(self) -> np.ndarray:
        return self.dlam.ravel()

    def ray_of_flat(self) -> np.ndarray:
        return np.repeat(np.array(self.rays), self.nodes_per_ray)

    def restrict(self, rays) -> "Contour":
        """Same radial layout on a subset of rays (restricted problems live on kpi/2 rays)."""
        return Contour(
            truncation_radius=self.truncation_radius,
            nodes_per_ray=self.nodes_per_ray,
            radii=self.radii,
            weights=self.weights,
            panel_of_node=self.panel_of_node,
            edges=self.edges,
            rays=tuple(rays),
        )

    def differentiation_blocks(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Per panel: node indices and the Lagrange differentiation matrix in r."""
        blocks = []
        for p in range(len(self.edges) - 1):
            idx = np.flatnonzero(self.panel_of_node == p)
            r = self.radii[idx]
            diff = r[:, None] - r[None, :]
            np.fill_diagonal(diff, 1.0)
            c = np.prod(diff, axis=1)
            d = (c[:, None] / c[None, :]) / diff
            np.fill_diagonal(d, 0.0)
            np.fill_diagonal(d, -d.sum(axis=1))
            blocks.append((idx, d))
        return blocks

    def export(self) -> str:
        rows = []
        for k, ray in enumerate(self.rays):
            for j in range(self.nodes_per_ray):
                lam = self.nodes[k, j]
                rows.append((ray, lam.real, lam.imag, self.weights[j]))
        meta = {"radius": self.truncation_radius, "nodes_per_ray": self.nodes_per_ray, "orientation": "outward"}
        return dump_records("contour", meta, ["ray_index", "re_lambda", "im_lambda", "weight"], rows)


def build_contour(truncation_radius: float, nodes_per_ray: int, r_min: float = R_MIN) -> Contour:
    if not truncation_radius > 0:
        raise InputError("truncation radius must be positive", radius=truncation_radius)
    if nodes_per_ray < 4:
        raise InputError("nodes_per_ray must be at least 4", nodes_per_ray=nodes_per_ray)

    panels = max(1, nodes_per_ray // NODES_PER_PANEL)
    sizes = [nodes_per_ray // panels + (1 if p < nodes_per_ray % panels else 0) for p in range(panels)]
    edges = panel_edges(truncation_radius, panels, r_min)

    radii, weights, owner = [], [], []
    for p, q in enumerate(sizes):
        t, w = leggauss(q)
        lo, hi = edges[p], edges[p + 1]
        radii.append(0.5 * (hi - lo) * t + 0.5 * (hi + lo))
        weights.append(0.5 * (hi - lo) * w)
        owner.append(np.full(q, p))

    contour = Contour(
        truncation_radius=float(truncation_radius),
        nodes_per_ray=nodes_per_ray,
        radii=np.concatenate(radii),
        weights=np.concatenate(weights),
        panel_of_node=np.concatenate(owner),
        edges=edges,
    )
    logger.debug(f"Built contour: radius={truncation_radius}, {panels} panels x {NUM_RAYS} rays")
    return contour
