"""Run configuration (JSON/YAML) and process settings from the environment."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Literal

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError
from .field import Grid

logger = logging.getLogger(__name__)

load_dotenv()


class GridSpec(BaseModel):
    """Either `h` or `half_width` fixes the spacing; origin defaults to a centered window."""

    model_config = ConfigDict(extra="forbid")

    nx: int = Field(default=129, ge=5)
    ny: int | None = Field(default=None, ge=5)
    h: float | None = Field(default=None, gt=0)
    half_width: float | None = Field(default=None, gt=0)
    origin: tuple[float, float] | None = None
    boundary_mode: Literal["periodic", "one_sided"] = "one_sided"

    def build(self) -> Grid:
        nx = self.nx
        ny = self.ny or nx
        periodic = self.boundary_mode == "periodic"
        h = self.h
        if h is None:
            if periodic:
                period = 2.0 * self.half_width if self.half_width else 2.0 * math.pi
                h = period / nx
            else:
                half_width = self.half_width if self.half_width else 2.0
                h = 2.0 * half_width / (nx - 1)
        if self.origin is not None:
            x0, y0 = self.origin
        elif periodic:
            x0, y0 = 0.0, 0.0
        else:
            x0, y0 = -0.5 * (nx - 1) * h, -0.5 * (ny - 1) * h
        return Grid(nx=nx, ny=ny, h=h, x0=x0, y0=y0, boundary_mode=self.boundary_mode)


class FlowOptions(BaseModel):
    model_config = ConfigDict(extra="forbid")

    bc: Literal["dirichlet_clamp", "periodic"] = "dirichlet_clamp"
    max_steps: int = Field(default=1000, ge=0)
    grad_tol: float = Field(default=1e-6, gt=0)
    tau: float | None = Field(default=None, gt=0)
    c_cfl: float = Field(default=0.05, gt=0)
    checkpoint_every: int = Field(default=0, ge=0)


class VerifyOptions(BaseModel):
    model_config = ConfigDict(extra="forbid")

    levels: int = Field(default=3, ge=2)
    eps: float = Field(default=1e-4, gt=0)
    min_order: float = 1.9
    gradient_pairs: int = Field(default=3, ge=1)
    gradient_tol: float = Field(default=1e-3, gt=0)
    stokes_tol: float = Field(default=1e-2, gt=0)
    # relative cutoff below which a sup-norm counts as exactly zero
    zero_tol: float = Field(default=1e-12, ge=0)


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    surface: str = "plane"
    params: dict[str, float] = Field(default_factory=dict)
    grid: GridSpec = Field(default_factory=GridSpec)
    radii: list[float] = Field(default_factory=lambda: [1.0, 2.0, 4.0])
    sigmas: list[float] = Field(default_factory=lambda: [8.0, 16.0, 32.0, 64.0])
    trim: int = Field(default=2, ge=0)
    seed: int = 0
    flow: FlowOptions = Field(default_factory=FlowOptions)
    verify: VerifyOptions = Field(default_factory=VerifyOptions)
    out: str | None = None

    @model_validator(mode="before")
    @classmethod
    def _fold_flat_params(cls, data: Any) -> Any:
        # {"surface": "gaussian_bump", "A": 1.0} is shorthand for params={"A": 1.0}
        if not isinstance(data, dict):
            return data
        known = set(cls.model_fields)
        data = dict(data)
        params = dict(data.get("params") or {})
        for key in [k for k in data if k not in known]:
            value = data[key]
            if isinstance(value, (int, float)) and not isinstance(value, bool):
                params[key] = data.pop(key)
        data["params"] = params
        return data

    @model_validator(mode="after")
    def _check_sweeps(self) -> RunConfig:
        if any(r <= 0 for r in self.radii):
            raise ValueError("radii must be positive")
        if any(s <= 1 for s in self.sigmas):
            raise ValueError("every sigma must exceed 1")
        return self


def config_hash(config: RunConfig) -> str:
    """sha256 of the canonical JSON dump; the output directory does not take part."""
    canonical = json.dumps(config.model_dump(mode="json", exclude={"out"}), sort_keys=True)
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def parse_config(data: dict[str, Any]) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"invalid run config: {exc}") from exc


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        if path.suffix.lower() in (".yaml", ".yml"):
            data = yaml.safe_load(text) or {}
        else:
            data = json.loads(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"could not parse {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return parse_config(data)


@dataclass(frozen=True)
class Settings:
    threads: int
    log_level: str


def env_settings() -> Settings:
    raw_threads = os.getenv("WGL_THREADS", "1").strip()
    try:
        threads = max(1, int(raw_threads))
    except ValueError:
        logger.warning(f"ignoring WGL_THREADS={raw_threads!r} (not an integer)")
        threads = 1
    return Settings(threads=threads, log_level=os.getenv("WGL_LOG_LEVEL", "INFO").strip().upper())
