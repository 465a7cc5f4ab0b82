"""
Direct scattering: eigenfunctions of the gauge-transformed Lax pair along the
axes and the spectral functions a, b (initial data) and A, B (boundary data).

The Volterra equations are integrated as ODE initial/final value problems,
columns only inside the regions where they stay bounded:

    mu_x = -i lam^2 [sigma3, mu] + N1 mu        (y = 0)
    mu_y = -2i lam^6 [sigma3, mu] + N2 mu       (x = 0)
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from django.conf import settings
from scipy.integrate import solve_ivp
from scipy.interpolate import BarycentricInterpolator, CubicSpline
from scipy.linalg import expm

from common.exceptions import InputError, NumericalError
from common.formats import Profile, dump_records, read_records

from .contour import NUM_RAYS, Contour, build_contour, classify
from .lax_pair import FieldJet, assemble_N1, assemble_N2, assemble_U, delta2_boundary

logger = logging.getLogger(__name__)

DEFAULT_RTOL = 1e-10
DEFAULT_ATOL = 1e-12
BOUNDED_TOLERANCE = 1e-9
DET_TOLERANCE = 1e-8

# Parity of each tabulated function under lam -> -lam.
PARITY = {
    "a": 1, "b": -1, "a_hat": 1, "b_hat": -1,
    "A": 1, "B": -1, "A_hat": 1, "B_hat": -1,
    "A2": 1, "B2": -1, "A2_hat": 1, "B2_hat": -1,
    "T11": 1, "T12": -1, "T21": -1, "T22": 1,
    "alpha": 1, "beta": -1, "alpha_hat": 1, "beta_hat": -1, "c_plus": -1,
}

SECTOR_LINE_ANGLES = (np.arange(6) + 0.5) * np.pi / 6


@dataclass(frozen=True)
class BoundaryData:
    g0: Profile
    g1: Profile
    g2: Profile

    def __post_init__(self):
        profiles = (self.g0, self.g1, self.g2)
        if any(p.tag != "y" for p in profiles):
            raise InputError("boundary profiles must be tagged 'y'")
        if len({p.n for p in profiles}) != 1 or not np.allclose([p.h for p in profiles], self.g0.h, rtol=1e-12):
            raise InputError(
                "mismatched grid lengths among g0, g1, g2",
                n=[p.n for p in profiles], h=[p.h for p in profiles],
            )

    @property
    def L(self) -> float:
        return self.g0.length

    @property
    def sup_norm(self) -> float:
        return self.g0.sup_norm

    @classmethod
    def zeros(cls, h: float, n: int) -> "BoundaryData":
        return cls(*(Profile.zeros("y", h, n) for _ in range(3)))


@dataclass(frozen=True)
class EigenfunctionTrace:
    """mu along an axis for a batch of lam; uncomputed columns are NaN."""

    which: str
    axis: str
    lam: np.ndarray
    grid: np.ndarray
    values: np.ndarray
    columns: tuple[int, ...]

    def at(self, index: int) -> np.ndarray:
        """Trace of the index-th lam, shape (len(grid), 2, 2)."""
        return self.values[:, index]

    def determinant(self) -> np.ndarray:
        v = self.values
        return v[..., 0, 0] * v[..., 1, 1] - v[..., 0, 1] * v[..., 1, 0]


class _Piece:
    """Coefficient data on one interval: a callable t -> (values, gauge)."""

    def __init__(self, start: float, stop: float, evaluate: Callable):
        self.start = start
        self.stop = stop
        self.evaluate = evaluate


def _stack_spline(grid: np.ndarray, values: np.ndarray) -> CubicSpline:
    return CubicSpline(grid, np.column_stack([values.real, values.imag]))


def _as_complex(stacked) -> complex | np.ndarray:
    stacked = np.asarray(stacked)
    return stacked[..., 0] + 1j * stacked[..., 1]


def _pieces(grid: np.ndarray, channels: Sequence[np.ndarray], density: np.ndarray, mode: str) -> list[_Piece]:
    """
    Split the sampled coefficients into smooth pieces.

    Args:
        grid: uniform sample points
        channels: sampled coefficient functions (u, or g0, g1, g2)
        density: sampled gauge density (Delta_1 or Delta_2); its running integral is the gauge
        mode: 'spline' for cubic interpolation, 'step' for left-continuous piecewise constants

    Returns:
        Pieces covering [grid[0], grid[-1]]
    """
    if mode == "spline":
        splines = [_stack_spline(grid, c) for c in channels]
        gauge = _stack_spline(grid, density).antiderivative()

        def evaluate(t):
            return tuple(_as_complex(s(t)) for s in splines), _as_complex(gauge(t))

        return [_Piece(grid[0], grid[-1], evaluate)]

    if mode != "step":
        raise InputError(f"unknown interpolation mode {mode!r}")

    stacked = np.vstack(channels)
    changes = [0] + [k for k in range(1, grid.size - 1) if np.any(stacked[:, k] != stacked[:, k - 1])] + [grid.size - 1]
    cumulative = np.concatenate([[0.0], np.cumsum(density[:-1] * np.diff(grid))])
    pieces = []
    for k0, k1 in zip(changes[:-1], changes[1:]):
        values = tuple(complex(c[k0]) for c in channels)
        slope, offset, start = complex(density[k0]), complex(cumulative[k0]), grid[k0]

        def evaluate(t, values=values, slope=slope, offset=offset, start=start):
            return values, offset + slope * (t - start)

        pieces.append(_Piece(grid[k0], grid[k1], evaluate))
    return pieces


def _commutator_factor(columns: Sequence[int]) -> np.ndarray:
    s = np.array([1.0, -1.0])
    return s[:, None] - s[list(columns)][None, :]


def _integrate(pieces, lam, k_lam, assemble, columns, forward, t_out, rtol, atol) -> dict[float, np.ndarray]:
    """Integrate the selected columns of mu for every lam at once."""
    lam = np.asarray(lam, dtype=complex)
    K, nc = lam.size, len(columns)
    factor = _commutator_factor(columns)
    state = np.zeros((K, 2, nc), dtype=complex)
    for j, c in enumerate(columns):
        state[:, c, j] = 1.0
    state = state.ravel()

    results: dict[float, np.ndarray] = {}
    for piece in (pieces if forward else reversed(pieces)):
        t0, t1 = (piece.start, piece.stop) if forward else (piece.stop, piece.start)
        if t0 == t1:
            continue
        lo, hi = min(t0, t1), max(t0, t1)
        inside = sorted({float(t) for t in t_out if lo <= t <= hi} | {float(t1)}, reverse=not forward)

        def rhs(t, y, piece=piece):
            values, gauge = piece.evaluate(t)
            N = assemble(values, gauge, lam)
            mu = y.reshape(K, 2, nc)
            return (-1j * k_lam[:, None, None] * factor[None] * mu + N @ mu).ravel()

        sol = solve_ivp(rhs, (t0, t1), state, method="DOP853", rtol=rtol, atol=atol, t_eval=inside)
        if sol.status < 0:
            raise NumericalError(
                f"Eigenfunction integration failed: {sol.message}",
                max_abs_lambda=float(np.max(np.abs(lam))),
            )
        for t, column in zip(sol.t, sol.y.T):
            results[float(t)] = column.reshape(K, 2, nc)
        state = sol.y[:, -1]
    return results


def _check_bounded(imag_part: np.ndarray, scale: np.ndarray, sign: int, what: str):
    if np.any(sign * imag_part < -BOUNDED_TOLERANCE * np.maximum(scale, 1.0)):
        raise InputError(f"unbounded column requested: {what}")


def _bounded_columns(which: str, sign_im: np.ndarray) -> tuple[int, ...]:
    """Columns that stay bounded for every lam; sign_im is sign of Im lam^2 (x) or Im lam^6 (y)."""
    first_needs = {"mu1": -1, "mu3": 1, "mu2": -1}[which]
    cols = []
    if np.all(first_needs * sign_im >= 0):
        cols.append(0)
    if np.all(-first_needs * sign_im >= 0):
        cols.append(1)
    if not cols:
        raise InputError(f"unbounded column requested: no column of {which} is bounded for every lam in the batch")
    return tuple(cols)


def _trace_from(results, t_out, lam, columns, which, axis) -> EigenfunctionTrace:
    values = np.full((len(t_out), np.size(lam), 2, 2), np.nan, dtype=complex)
    keys = np.array(sorted(results))
    for i, t in enumerate(t_out):
        nearest = keys[np.argmin(np.abs(keys - t))]
        values[i][..., list(columns)] = results[float(nearest)]
    return EigenfunctionTrace(which=which, axis=axis, lam=np.asarray(lam), grid=np.asarray(t_out),
                              values=values, columns=tuple(columns))


def _x_pieces(profile: Profile, mode: str):
    if profile.tag != "x":
        raise InputError("initial data profile must be tagged 'x'")
    return _pieces(profile.grid, [profile.samples], 0.5 * profile.samples, mode)


def _y_pieces(data: BoundaryData, mode: str):
    g0, g1, g2 = data.g0.samples, data.g1.samples, data.g2.samples
    return _pieces(data.g0.grid, [g0, g1, g2], delta2_boundary(g0, g1, g2), mode)


def _sign_tolerant(values: np.ndarray, scale: np.ndarray) -> np.ndarray:
    s = np.sign(values)
    s[np.abs(values) <= BOUNDED_TOLERANCE * np.maximum(scale, 1.0)] = 0
    return s


def integrate_mu_x(
    profile: Profile,
    lam,
    which: str = "mu1",
    columns: Optional[Sequence[int]] = None,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
    mode: str = "spline",
    t_out: Optional[np.ndarray] = None,
) -> EigenfunctionTrace:
    if which not in ("mu1", "mu3"):
        raise InputError(f"x-traces exist for mu1 and mu3, not {which}")
    lam = np.atleast_1d(np.asarray(lam, dtype=complex))
    lam2 = lam * lam
    sign = _sign_tolerant(lam2.imag, np.abs(lam2))
    bounded = _bounded_columns(which, sign)
    if columns is None:
        columns = bounded
    elif not set(columns) <= set(bounded):
        raise InputError(f"unbounded column requested: {which} columns {tuple(columns)}",
                         max_abs_lambda=float(np.max(np.abs(lam))))

    grid = profile.grid if t_out is None else np.asarray(t_out, dtype=float)
    results = _integrate(
        _x_pieces(profile, mode), lam, lam2,
        lambda values, gauge, lam: assemble_N1(values[0], gauge, lam),
        columns, forward=(which == "mu3"), t_out=grid, rtol=rtol, atol=atol,
    )
    return _trace_from(results, grid, lam, columns, which, "x")


def integrate_mu_y(
    data: BoundaryData,
    L: float,
    lam,
    which: str = "mu3",
    columns: Optional[Sequence[int]] = None,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
    mode: str = "spline",
    t_out: Optional[np.ndarray] = None,
) -> EigenfunctionTrace:
    if which not in ("mu2", "mu3"):
        raise InputError(f"y-traces exist for mu2 and mu3, not {which}")
    if not np.isclose(L, data.L, rtol=0, atol=0.5 * data.g0.h):
        raise InputError("L does not match the boundary data grid", L=L, grid_length=data.L)
    lam = np.atleast_1d(np.asarray(lam, dtype=complex))
    lam6 = lam ** 6
    sign = _sign_tolerant(lam6.imag, np.abs(lam6))
    if columns is None:
        columns = _bounded_columns(which, sign)
    else:
        bounded = _bounded_columns(which, sign)
        if not set(columns) <= set(bounded):
            raise InputError(f"unbounded column requested: {which} columns {tuple(columns)}",
                             max_abs_lambda=float(np.max(np.abs(lam))))

    grid = data.g0.grid if t_out is None else np.asarray(t_out, dtype=float)
    results = _integrate(
        _y_pieces(data, mode), lam, 2 * lam6,
        lambda values, gauge, lam: assemble_N2(values[0], values[1], values[2], gauge, lam),
        columns, forward=(which == "mu3"), t_out=grid, rtol=rtol, atol=atol,
    )
    return _trace_from(results, grid, lam, columns, which, "y")


def compute_s1(profile: Profile, lam, rtol: float = DEFAULT_RTOL, mode: str = "spline") -> np.ndarray:
    """
    S1 = mu1(0, 0) = [[a_hat, b], [b_hat, a]].

    The second column is integrated where Im lam^2 >= 0 and the first where
    Im lam^2 <= 0; both exist on the real and imaginary axes. Entries of an
    unbounded column are NaN.
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=complex))
    lam2 = lam * lam
    sign = _sign_tolerant(lam2.imag, np.abs(lam2))
    out = np.full(lam.shape + (2, 2), np.nan + 0j)
    for column, admissible in ((1, sign >= 0), (0, sign <= 0)):
        if np.any(admissible):
            trace = integrate_mu_x(profile, lam[admissible], "mu1", columns=(column,), rtol=rtol, mode=mode,
                                   t_out=np.array([0.0]))
            out[admissible, :, column] = trace.values[0, :, :, column]
    return out


def compute_ab(profile: Profile, lam, rtol: float = DEFAULT_RTOL, mode: str = "spline") -> tuple[np.ndarray, np.ndarray]:
    """(b, a) is the second column of mu1 at the origin; needs Im lam^2 >= 0."""
    lam = np.atleast_1d(np.asarray(lam, dtype=complex))
    _check_bounded((lam * lam).imag, np.abs(lam) ** 2, 1, "a, b need Im lam^2 >= 0")
    s1 = compute_s1(profile, lam, rtol=rtol, mode=mode)
    return s1[:, 1, 1], s1[:, 0, 1]


def compute_ab_hat(profile: Profile, lam, rtol: float = DEFAULT_RTOL, mode: str = "spline") -> tuple[np.ndarray, np.ndarray]:
    """(a_hat, b_hat) is the first column of mu1 at the origin; needs Im lam^2 <= 0."""
    lam = np.atleast_1d(np.asarray(lam, dtype=complex))
    _check_bounded((lam * lam).imag, np.abs(lam) ** 2, -1, "a_hat, b_hat need Im lam^2 <= 0")
    s1 = compute_s1(profile, lam, rtol=rtol, mode=mode)
    return s1[:, 0, 0], s1[:, 1, 0]


@dataclass(frozen=True)
class BoundarySpectral:
    """
    A, B and A_hat, B_hat by both routes plus the full mu3(0, L) where it was computed.

    S2 = mu2(0, 0) = [[A_hat, B], [B_hat, A]]; pairs that are unbounded at a
    lam are NaN there.
    """

    A: np.ndarray
    B: np.ndarray
    A_hat: np.ndarray
    B_hat: np.ndarray
    A_mu2: np.ndarray
    B_mu2: np.ndarray
    A_hat_mu2: np.ndarray
    B_hat_mu2: np.ndarray
    transfer: np.ndarray

    @property
    def route_discrepancy(self) -> float:
        diff = np.abs(np.concatenate([
            self.A - self.A_mu2, self.B - self.B_mu2,
            self.A_hat - self.A_hat_mu2, self.B_hat - self.B_hat_mu2,
        ]))
        diff = diff[np.isfinite(diff)]
        return float(diff.max()) if diff.size else 0.0

    def matrix(self) -> np.ndarray:
        """S2 from the preferred route, shape (K, 2, 2)."""
        return np.stack([
            np.stack([self.A_hat, self.B], axis=-1),
            np.stack([self.B_hat, self.A], axis=-1),
        ], axis=-2)


def compute_AB(data: BoundaryData, L: float, lam, rtol: float = DEFAULT_RTOL, mode: str = "spline") -> BoundarySpectral:
    """
    A, B and A_hat, B_hat from the boundary data.

    On the contour (lam^6 real) the full transfer matrix T = mu3(0, L) gives
    A = T11, B = -exp(4i lam^6 L) T12, A_hat = T22 and
    B_hat = -exp(-4i lam^6 L) T21. mu2(0, 0) gives the same entries: its
    second column where Im lam^6 >= 0 and its first where Im lam^6 <= 0.
    Off the contour only the mu2 route is bounded.
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=complex))
    lam6 = lam ** 6
    sign = _sign_tolerant(lam6.imag, np.abs(lam6))
    on_contour = sign == 0

    transfer = np.full(lam.shape + (2, 2), np.nan + 0j)
    if np.any(on_contour):
        trace = integrate_mu_y(data, L, lam[on_contour], "mu3", columns=(0, 1), rtol=rtol, mode=mode,
                               t_out=np.array([L]))
        transfer[on_contour] = trace.values[0]

    s2 = np.full(lam.shape + (2, 2), np.nan + 0j)
    for column, admissible in ((1, sign >= 0), (0, sign <= 0)):
        if np.any(admissible):
            trace = integrate_mu_y(data, L, lam[admissible], "mu2", columns=(column,), rtol=rtol, mode=mode,
                                   t_out=np.array([0.0]))
            s2[admissible, :, column] = trace.values[0, :, :, column]

    phase = np.exp(4j * lam6 * L)
    A_mu2, B_mu2, A_hat_mu2, B_hat_mu2 = s2[:, 1, 1], s2[:, 0, 1], s2[:, 0, 0], s2[:, 1, 0]
    return BoundarySpectral(
        A=np.where(on_contour, transfer[:, 0, 0], A_mu2),
        B=np.where(on_contour, -phase * transfer[:, 0, 1], B_mu2),
        A_hat=np.where(on_contour, transfer[:, 1, 1], A_hat_mu2),
        B_hat=np.where(on_contour, -transfer[:, 1, 0] / phase, B_hat_mu2),
        A_mu2=A_mu2, B_mu2=B_mu2, A_hat_mu2=A_hat_mu2, B_hat_mu2=B_hat_mu2,
        transfer=transfer,
    )


def oracle_s1_piecewise_constant(
    steps: Sequence[tuple[float, float, complex]], lam, x_max: Optional[float] = None,
) -> np.ndarray:
    """
    S1 = mu1(0, 0) for u equal to a constant on each (start, end) interval and zero elsewhere.

    The psi-equation has constant coefficients on every interval, so the
    fundamental solution is a product of matrix exponentials of U. mu1 is
    normalized at x_max (default: the end of the support); U21 = 2 lam does not
    vanish with u, so the first column depends on that choice.
    """
    lam = complex(lam)
    ordered = sorted((float(s), float(e), complex(v)) for s, e, v in steps)
    for s, e, _ in ordered:
        if not e > s or s < 0:
            raise InputError("oracle intervals must satisfy 0 <= start < end", start=s, end=e)
    for (s0, e0, _), (s1, e1, _) in zip(ordered[:-1], ordered[1:]):
        if s1 < e0:
            raise InputError("overlapping intervals in piecewise-constant data", first=(s0, e0), second=(s1, e1))

    intervals, cursor = [], 0.0
    for s, e, v in ordered:
        if s > cursor:
            intervals.append((cursor, s, 0j))
        intervals.append((s, e, v))
        cursor = e
    if x_max is not None:
        if x_max < cursor:
            raise InputError("x_max lies inside the support", x_max=x_max, support_end=cursor)
        if x_max > cursor:
            intervals.append((cursor, float(x_max), 0j))
            cursor = float(x_max)
    gauge_end = sum(0.5 * v * (e - s) for s, e, v in intervals)

    phase = np.exp(1j * gauge_end) * np.exp(-1j * lam * lam * cursor)
    psi = np.diag([phase, 1.0 / phase]).astype(complex)
    for s, e, v in reversed(intervals):
        psi = expm(-assemble_U(FieldJet(v), lam) * (e - s)) @ psi
    return psi


def oracle_ab_piecewise_constant(steps: Sequence[tuple[float, float, complex]], lam) -> tuple[complex, complex]:
    """(a, b) for piecewise-constant u; the second column does not depend on x_max."""
    s1 = oracle_s1_piecewise_constant(steps, lam)
    return complex(s1[1, 1]), complex(s1[0, 1])


@dataclass
class SpectralTable:
    """
    Spectral functions on a structured lam sample set.

    ray_or_sector holds the ray index 0..11 for contour nodes and -i for the
    interior radial line of sector D_i; node is the radial index on that line.
    Functions that are undefined at a sample are NaN there.
    """

    lam: np.ndarray
    ray_or_sector: np.ndarray
    node: np.ndarray
    columns: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        if name not in self.columns:
            return np.full(self.lam.shape, np.nan + 0j)
        return self.columns[name]

    def has(self, name: str) -> bool:
        return name in self.columns and bool(np.any(np.isfinite(self.columns[name])))

    def on_ray(self, ray: int) -> np.ndarray:
        return np.flatnonzero(self.ray_or_sector == ray)

    def negation_index(self) -> np.ndarray:
        """Index of the sample at -lam, or -1 when -lam was not sampled."""
        keys = {(int(r), int(n)): i for i, (r, n) in enumerate(zip(self.ray_or_sector, self.node))}
        target = np.full(self.lam.size, -1)
        for i, (r, n) in enumerate(zip(self.ray_or_sector, self.node)):
            if r >= 0:
                target[i] = keys.get(((int(r) + NUM_RAYS // 2) % NUM_RAYS, int(n)), -1)
        return target

    def parity_defect(self, name: str) -> float:
        """max |f(-lam) - parity * f(lam)| over sample pairs where both values were computed."""
        target = self.negation_index()
        values = self.column(name)
        ok = target >= 0
        diff = values[target[ok]] - PARITY.get(name, 1) * values[ok]
        diff = np.abs(diff[np.isfinite(diff)])
        return float(diff.max()) if diff.size else float("nan")

    def merge(self, other: "SpectralTable") -> "SpectralTable":
        if self.lam.shape != other.lam.shape or not np.allclose(self.lam, other.lam, rtol=1e-13, atol=1e-15):
            raise InputError("spectral tables were built on different lam sample sets")
        columns = dict(self.columns)
        for name, values in other.columns.items():
            if name in columns and np.any(np.isfinite(columns[name])):
                continue
            columns[name] = values
        return SpectralTable(self.lam, self.ray_or_sector, self.node, columns, {**self.metadata, **other.metadata})

    def contour(self) -> Contour:
        return build_contour(float(self.metadata["radius"]), int(self.metadata["nodes_per_ray"]))

    def value(self, name: str, lam: complex) -> complex:
        """Column value at lam: exact node match, else panel-local barycentric interpolation along the ray."""
        lam = complex(lam)
        match = np.flatnonzero(np.abs(self.lam - lam) <= 1e-12 * max(abs(lam), 1.0))
        if match.size:
            return complex(self.column(name)[match[0]])
        location = classify(lam)
        if location.ray is None:
            raise InputError("lam is neither a table sample nor on a tabulated ray", lam=lam)
        contour = self.contour()
        r = abs(lam)
        if r > contour.truncation_radius:
            raise InputError("lam beyond the truncation radius", lam=lam)
        panel = min(int(np.searchsorted(contour.edges, r, side="right")) - 1, len(contour.edges) - 2)
        idx = np.flatnonzero(contour.panel_of_node == panel)
        on_ray = self.on_ray(location.ray)
        values = self.column(name)[on_ray][idx]
        real = BarycentricInterpolator(contour.radii[idx], values.real)(r)
        imag = BarycentricInterpolator(contour.radii[idx], values.imag)(r)
        return complex(real + 1j * imag)

    def dump(self) -> str:
        names = ["a", "b", "A", "B"] + sorted(n for n in self.columns if n not in ("a", "b", "A", "B"))
        header = ["ray_or_sector", "index", "re_lambda", "im_lambda"]
        for n in names:
            header += [f"re_{n}", f"im_{n}"]
        rows = []
        for i in range(self.lam.size):
            row = [int(self.ray_or_sector[i]), int(self.node[i]), self.lam[i].real, self.lam[i].imag]
            for n in names:
                v = self.column(n)[i]
                row += [v.real, v.imag]
            rows.append(row)
        return dump_records("spectral", self.metadata, header, rows)

    @classmethod
    def read(cls, path) -> "SpectralTable":
        metadata, header, data = read_records(path, "spectral")
        if header[:4] != ["ray_or_sector", "index", "re_lambda", "im_lambda"]:
            from common.exceptions import ParseError

            raise ParseError(path, 2, "unexpected spectral table columns")
        columns = {}
        for j in range(4, len(header), 2):
            name = header[j][3:]
            values = data[:, j] + 1j * data[:, j + 1]
            if np.any(np.isfinite(values)):
                columns[name] = values
        return cls(
            lam=data[:, 2] + 1j * data[:, 3],
            ray_or_sector=data[:, 0].astype(int),
            node=data[:, 1].astype(int),
            columns=columns,
            metadata=metadata,
        )


def sample_set(contour: Contour, interior: bool = True) -> SpectralTable:
    """Contour nodes plus, optionally, one radial line through each sector."""
    lam = [contour.nodes.ravel()]
    label = [contour.ray_of_flat()]
    node = [np.tile(np.arange(contour.nodes_per_ray), contour.num_rays)]
    if interior:
        for i, angle in enumerate(SECTOR_LINE_ANGLES, start=1):
            lam.append(np.exp(1j * angle) * contour.radii)
            label.append(np.full(contour.nodes_per_ray, -i))
            node.append(np.arange(contour.nodes_per_ray))
    return SpectralTable(
        lam=np.concatenate(lam),
        ray_or_sector=np.concatenate(label),
        node=np.concatenate(node),
        metadata={"radius": contour.truncation_radius, "nodes_per_ray": contour.nodes_per_ray},
    )


def tabulate_ab(profile: Profile, table: SpectralTable, rtol: float = DEFAULT_RTOL, mode: str = "spline") -> SpectralTable:
    """
    S1 entries on the sample set: a, b where Im lam^2 >= 0 and a_hat, b_hat
    where Im lam^2 <= 0. Every sample is integrated; nothing is filled in by parity.
    """
    if not profile.is_decaying():
        logger.warning(f"Initial data does not decay at x_max={profile.length}; mu1 normalization is approximate")
    a, b, a_hat, b_hat = sweep("ab", {"profile": profile_payload(profile), "rtol": rtol, "mode": mode}, table.lam)
    result = SpectralTable(table.lam, table.ray_or_sector, table.node, dict(table.columns), dict(table.metadata))
    result.columns.update({"a": a, "b": b, "a_hat": a_hat, "b_hat": b_hat})
    result.metadata.update({"x_max": profile.length, "hx": profile.h, "rtol": rtol, "mode": mode})
    logger.info(f"Tabulated a, b at {int(np.isfinite(a).sum())} and a_hat, b_hat at {int(np.isfinite(a_hat).sum())} samples")
    return result


def tabulate_AB(data: BoundaryData, table: SpectralTable, rtol: float = DEFAULT_RTOL, mode: str = "spline") -> SpectralTable:
    """
    S2 entries on the sample set by both routes, plus the transfer matrix on the contour.

    A, B exist where Im lam^6 >= 0 (contour, D1, D3, D5) and A_hat, B_hat
    where Im lam^6 <= 0 (contour, D2, D4, D6).
    """
    A, B, A_hat, B_hat, A2, B2, A2_hat, B2_hat, transfer = sweep(
        "AB", {"boundary": boundary_payload(data), "L": data.L, "rtol": rtol, "mode": mode}, table.lam
    )
    result = SpectralTable(table.lam, table.ray_or_sector, table.node, dict(table.columns), dict(table.metadata))
    result.columns.update({
        "A": A, "B": B, "A_hat": A_hat, "B_hat": B_hat,
        "A2": A2, "B2": B2, "A2_hat": A2_hat, "B2_hat": B2_hat,
        "T11": transfer[:, 0, 0], "T12": transfer[:, 0, 1],
        "T21": transfer[:, 1, 0], "T22": transfer[:, 1, 1],
    })
    result.metadata.update({"L": data.L, "hy": data.g0.h, "rtol": rtol, "mode": mode})
    logger.info(f"Tabulated A, B at {int(np.isfinite(A).sum())} and A_hat, B_hat at {int(np.isfinite(A_hat).sum())} samples")
    return result


def profile_payload(profile: Profile) -> dict:
    return {"tag": profile.tag, "h": profile.h, "re": profile.samples.real.tolist(), "im": profile.samples.imag.tolist()}


def profile_from_payload(payload: dict) -> Profile:
    return Profile(tag=payload["tag"], h=payload["h"], samples=np.asarray(payload["re"]) + 1j * np.asarray(payload["im"]))


def boundary_payload(data: BoundaryData) -> dict:
    return {"g0": profile_payload(data.g0), "g1": profile_payload(data.g1), "g2": profile_payload(data.g2)}


def boundary_from_payload(payload: dict) -> BoundaryData:
    return BoundaryData(*(profile_from_payload(payload[k]) for k in ("g0", "g1", "g2")))


def run_chunk(kind: str, payload: dict, lam: np.ndarray) -> list[np.ndarray]:
    """One unit of sweep work; the same code runs inline and inside a worker."""
    lam = np.asarray(lam, dtype=complex)
    if kind == "ab":
        s1 = compute_s1(profile_from_payload(payload["profile"]), lam, payload["rtol"], payload["mode"])
        return [s1[:, 1, 1], s1[:, 0, 1], s1[:, 0, 0], s1[:, 1, 0]]
    if kind == "AB":
        s = compute_AB(boundary_from_payload(payload["boundary"]), payload["L"], lam,
                       payload["rtol"], payload["mode"])
        return [s.A, s.B, s.A_hat, s.B_hat, s.A_mu2, s.B_mu2, s.A_hat_mu2, s.B_hat_mu2, s.transfer]
    raise InputError(f"unknown sweep kind {kind!r}")


def sweep(kind: str, payload: dict, lam: np.ndarray) -> list[np.ndarray]:
    """
    Evaluate a chunked lam sweep, inline or through celery workers.

    Chunks are merged in index order so the result does not depend on where
    each chunk ran.
    """
    lam = np.asarray(lam, dtype=complex)
    if lam.size == 0:
        raise InputError("empty lam sweep", kind=kind)
    chunk = max(1, settings.FOKAS_SWEEP_CHUNK)
    parts = [lam[i:i + chunk] for i in range(0, lam.size, chunk)]

    if settings.FOKAS_DISPATCH_SWEEPS:
        from celery import group

        from .tasks import scatter_chunk_task

        job = group(scatter_chunk_task.s(kind, payload, [[z.real, z.imag] for z in part]) for part in parts)
        encoded = job.apply_async().get()
        chunks = [[_decode(values) for values in result] for result in encoded]
    else:
        chunks = [run_chunk(kind, payload, part) for part in parts]
    return [np.concatenate([c[k] for c in chunks]) for k in range(len(chunks[0]))]


def encode(values: np.ndarray) -> dict:
    values = np.asarray(values, dtype=complex)
    return {"shape": list(values.shape), "re": values.real.ravel().tolist(), "im": values.imag.ravel().tolist()}


def _decode(payload: dict) -> np.ndarray:
    return (np.asarray(payload["re"]) + 1j * np.asarray(payload["im"])).reshape(payload["shape"])
