from __future__ import annotations

import logging
from pathlib import Path
from typing import Iterable, Mapping, Optional

from django.conf import settings
from pydantic import BaseModel, Field, ValidationError

from .exceptions import InputError, ParseError

logger = logging.getLogger(__name__)


class RunConfig(BaseModel):
    x_max: float = Field(gt=0, description="Truncation point of the half-line for initial data")
    L: float = Field(gt=0, description="Length of the evolution interval in y")
    truncation_radius: float = Field(gt=0, description="Radius beyond which jump matrices are replaced by I")
    nodes_per_ray: int = Field(ge=4, description="Quadrature nodes per contour ray")
    rtol: float = Field(gt=0, lt=1, description="Relative tolerance of the eigenfunction integrator")
    amplitude_guard: float = Field(gt=0, le=0.5, description="Largest admissible sup-norm of input data")
    output_dir: str = Field(description="Directory receiving every file a command writes")
    seed: int = Field(ge=0, description="Seed for randomized property suites")
    hx: float = Field(gt=0, description="Oracle grid step in x")
    hy: float = Field(gt=0, description="Oracle step in y")

    model_config = {"extra": "forbid", "frozen": True}

    @property
    def output_path(self) -> Path:
        return Path(self.output_dir)

    def as_report(self) -> dict:
        return {f"config.{k}": v for k, v in self.model_dump().items()}


def parse_config_lines(lines: Iterable[str], source: str = "<config>") -> dict:
    """
    Parse flat key=value lines.

    Args:
        lines: raw text lines; '#' starts a comment, blank lines are skipped
        source: name used in error messages

    Returns:
        Mapping of key to raw string value
    """
    values: dict[str, str] = {}
    known = set(RunConfig.model_fields)
    for number, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(source, number, f"expected key=value, got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise ParseError(source, number, f"unknown key {key!r}")
        values[key] = value
    return values


def load_run_config(
    config_file: Optional[str | Path] = None,
    overrides: Optional[Iterable[str] | Mapping[str, object]] = None,
) -> RunConfig:
    """Settings defaults, then the config file, then command-line overrides."""
    values: dict[str, object] = dict(settings.FOKAS_DEFAULTS)

    if config_file:
        path = Path(config_file)
        if not path.exists():
            raise InputError(f"Config file not found: {path}", path=str(path))
        values.update(parse_config_lines(path.read_text().splitlines(), source=str(path)))

    if overrides:
        if isinstance(overrides, Mapping):
            values.update(overrides)
        else:
            values.update(parse_config_lines(overrides, source="--set"))

    try:
        config = RunConfig(**values)
    except ValidationError as e:
        raise InputError(f"Invalid run configuration: {e.errors()[0]['loc'][0]}: {e.errors()[0]['msg']}")
    logger.debug(f"Run configuration resolved: {config.model_dump()}")
    return config
