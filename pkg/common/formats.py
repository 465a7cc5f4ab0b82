"""
Plain-text artifacts: sampled profiles, field grids, tabulated records and
key=value reports.

Every float is written with 17 significant digits so that reading a file
back reproduces the in-memory values exactly.
"""

from __future__ import annotations

import logging
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .exceptions import InputError, ParseError

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "{:.16e}"


def fmt(value: float) -> str:
    return FLOAT_FORMAT.format(float(value))


@dataclass(frozen=True)
class Profile:
    """Complex samples of one real variable on the uniform grid 0, h, 2h, ..."""

    tag: str
    h: float
    samples: np.ndarray

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=complex)
        object.__setattr__(self, "samples", samples)
        if self.tag not in ("x", "y"):
            raise InputError(f"Profile tag must be 'x' or 'y', got {self.tag!r}")
        if not self.h > 0:
            raise InputError("Profile step must be positive", h=self.h)
        if samples.ndim != 1 or samples.size < 4:
            raise InputError("Profile needs at least 4 samples", n=samples.size)
        if not np.all(np.isfinite(samples)):
            raise InputError("Profile contains non-finite samples")

    @property
    def n(self) -> int:
        return self.samples.size

    @property
    def length(self) -> float:
        return self.h * (self.n - 1)

    @property
    def grid(self) -> np.ndarray:
        return self.h * np.arange(self.n)

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.samples)))

    def is_decaying(self, ratio: float = 1e-8) -> bool:
        peak = self.sup_norm
        return peak == 0.0 or abs(self.samples[-1]) < ratio * peak

    @classmethod
    def sample(cls, func, tag: str, h: float, n: int) -> "Profile":
        grid = h * np.arange(n)
        return cls(tag=tag, h=h, samples=np.asarray(func(grid), dtype=complex) * np.ones(n))

    @classmethod
    def zeros(cls, tag: str, h: float, n: int) -> "Profile":
        return cls(tag=tag, h=h, samples=np.zeros(n, dtype=complex))


@dataclass(frozen=True)
class FieldGrid:
    """u(x_i, y_j) stored with rows indexed by y."""

    hx: float
    hy: float
    samples: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=complex)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 2:
            raise InputError("Field samples must be a 2-D array")
        if not np.all(np.isfinite(samples)):
            raise InputError("Field contains non-finite samples")

    @property
    def ny(self) -> int:
        return self.samples.shape[0]

    @property
    def nx(self) -> int:
        return self.samples.shape[1]

    @property
    def x(self) -> np.ndarray:
        return self.hx * np.arange(self.nx)

    @property
    def y(self) -> np.ndarray:
        return self.hy * np.arange(self.ny)


def atomic_write(path: str | Path, text: str) -> Path:
    """Write to a sibling temporary file and rename it over the target."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp_name, path)
    except Exception:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    logger.debug(f"Wrote {path}")
    return path


def _read_lines(path: str | Path) -> list[str]:
    path = Path(path)
    if not path.exists():
        raise InputError(f"File not found: {path}", path=str(path))
    return path.read_text().splitlines()


def _parse_header(line: str, kind: str, path, number: int = 1) -> tuple[list[str], dict[str, str]]:
    parts = line.split()
    if len(parts) < 2 or parts[0] != "#" or parts[1] != kind:
        raise ParseError(path, number, f"expected '# {kind} ...' header")
    words, pairs = [], {}
    for token in parts[2:]:
        if "=" in token:
            key, value = token.split("=", 1)
            pairs[key] = value
        else:
            words.append(token)
    return words, pairs


def _parse_floats(line: str, count: int, path, number: int) -> list[float]:
    tokens = line.split()
    if len(tokens) != count:
        raise ParseError(path, number, f"expected {count} numbers, found {len(tokens)}")
    try:
        return [float(t) for t in tokens]
    except ValueError:
        raise ParseError(path, number, f"not a number in {line.strip()!r}")


def dump_profile(profile: Profile) -> str:
    lines = [f"# profile {profile.tag} h={fmt(profile.h)} n={profile.n}"]
    lines += [f"{fmt(v.real)} {fmt(v.imag)}" for v in profile.samples]
    return "\n".join(lines) + "\n"


def write_profile(path: str | Path, profile: Profile) -> Path:
    return atomic_write(path, dump_profile(profile))


def read_profile(path: str | Path) -> Profile:
    lines = _read_lines(path)
    if not lines:
        raise ParseError(path, 1, "empty file")
    words, pairs = _parse_header(lines[0], "profile", path)
    if len(words) != 1 or "h" not in pairs or "n" not in pairs:
        raise ParseError(path, 1, "header must read '# profile <tag> h=<step> n=<count>'")
    try:
        h, n = float(pairs["h"]), int(pairs["n"])
    except ValueError:
        raise ParseError(path, 1, "unreadable h or n in header")
    body = [(i, line) for i, line in enumerate(lines[1:], start=2) if line.strip()]
    if len(body) != n:
        raise ParseError(path, len(lines), f"header announces {n} samples, found {len(body)}")
    samples = np.empty(n, dtype=complex)
    for k, (number, line) in enumerate(body):
        re, im = _parse_floats(line, 2, path, number)
        samples[k] = complex(re, im)
    return Profile(tag=words[0], h=h, samples=samples)


def dump_field(grid: FieldGrid) -> str:
    lines = [f"# field hx={fmt(grid.hx)} hy={fmt(grid.hy)} nx={grid.nx} ny={grid.ny}"]
    lines += [f"{fmt(v.real)} {fmt(v.imag)}" for v in grid.samples.ravel()]
    return "\n".join(lines) + "\n"


def write_field(path: str | Path, grid: FieldGrid) -> Path:
    return atomic_write(path, dump_field(grid))


def read_field(path: str | Path) -> FieldGrid:
    lines = _read_lines(path)
    if not lines:
        raise ParseError(path, 1, "empty file")
    _, pairs = _parse_header(lines[0], "field", path)
    try:
        hx, hy = float(pairs["hx"]), float(pairs["hy"])
        nx, ny = int(pairs["nx"]), int(pairs["ny"])
    except (KeyError, ValueError):
        raise ParseError(path, 1, "header must read '# field hx=.. hy=.. nx=.. ny=..'")
    body = [(i, line) for i, line in enumerate(lines[1:], start=2) if line.strip()]
    if len(body) != nx * ny:
        raise ParseError(path, len(lines), f"expected {nx * ny} samples, found {len(body)}")
    values = np.empty(nx * ny, dtype=complex)
    for k, (number, line) in enumerate(body):
        re, im = _parse_floats(line, 2, path, number)
        values[k] = complex(re, im)
    return FieldGrid(hx=hx, hy=hy, samples=values.reshape(ny, nx))


def dump_records(kind: str, metadata: Mapping[str, object], columns: Sequence[str], rows: Iterable[Sequence]) -> str:
    """Header '# <kind> key=value ...', a '# columns ...' line, then one record per line."""
    meta = " ".join(f"{k}={v}" for k, v in metadata.items())
    lines = [f"# {kind} {meta}".rstrip(), "# columns " + " ".join(columns)]
    for row in rows:
        lines.append(" ".join(str(v) if isinstance(v, (int, np.integer)) else fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def read_records(path: str | Path, kind: str) -> tuple[dict[str, str], list[str], np.ndarray]:
    """Inverse of dump_records; numeric payload comes back as a float array."""
    lines = _read_lines(path)
    if len(lines) < 2:
        raise ParseError(path, 1, f"{kind} file needs a header and a column line")
    _, metadata = _parse_header(lines[0], kind, path)
    if not lines[1].startswith("# columns "):
        raise ParseError(path, 2, "expected '# columns ...' line")
    columns = lines[1].split()[2:]
    rows = []
    for number, line in enumerate(lines[2:], start=3):
        if line.strip():
            rows.append(_parse_floats(line, len(columns), path, number))
    data = np.array(rows, dtype=float).reshape(len(rows), len(columns))
    return metadata, columns, data


def format_report(report: Mapping[str, object]) -> str:
    """One key=value pair per line; complex values split into .re/.im keys."""
    lines = []
    for key, value in report.items():
        if isinstance(value, (complex, np.complexfloating)):
            lines.append(f"{key}.re={fmt(value.real)}")
            lines.append(f"{key}.im={fmt(value.imag)}")
        elif isinstance(value, (float, np.floating)):
            lines.append(f"{key}={fmt(value)}")
        elif isinstance(value, (bool, np.bool_)):
            lines.append(f"{key}={'true' if value else 'false'}")
        else:
            lines.append(f"{key}={value}")
    return "\n".join(lines) + "\n"


def parse_report(text: str) -> dict[str, str]:
    result = {}
    for line in text.splitlines():
        if "=" in line and not line.startswith("#"):
            key, value = line.split("=", 1)
            result[key.strip()] = value.strip()
    return result


def dump_steps(steps: Iterable[tuple[float, float, complex]]) -> str:
    rows = [(s, e, complex(v).real, complex(v).imag) for s, e, v in steps]
    return dump_records("steps", {}, ["start", "end", "re_value", "im_value"], rows)


def read_steps(path: str | Path) -> list[tuple[float, float, complex]]:
    """Piecewise-constant data: u = value on [start, end), zero elsewhere."""
    _, columns, data = read_records(path, "steps")
    if columns != ["start", "end", "re_value", "im_value"]:
        raise ParseError(path, 2, "steps file needs columns start end re_value im_value")
    return [(float(r[0]), float(r[1]), complex(r[2], r[3])) for r in data]
