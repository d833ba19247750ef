"""File formats: WGL1 binary fields, CSV tables and JSON summaries."""

from __future__ import annotations

import io
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable

import numpy as np
import pandas as pd

from . import __version__
from .errors import GridError
from .field import Grid, ScalarField

logger = logging.getLogger(__name__)

TOOL = "willmore_lab"
WGL_MAGIC = "WGL1"


@dataclass(frozen=True)
class ArtifactMeta:
    config_hash: str = ""
    tool: str = TOOL
    version: str = __version__

    def as_dict(self) -> dict[str, str]:
        return {"tool": self.tool, "version": self.version, "config_hash": self.config_hash}

    def tokens(self) -> str:
        return f"tool={self.tool} version={self.version} config={self.config_hash or '-'}"


def write_wgl(path: Path, f: ScalarField, meta: ArtifactMeta | None = None) -> Path:
    """Header `WGL1 nx ny h x0 y0 boundary_mode [key=value ...]`, then little-endian f64, y outer."""
    g = f.grid
    header = f"{WGL_MAGIC} {g.nx} {g.ny} {g.h!r} {g.x0!r} {g.y0!r} {g.boundary_mode}"
    if meta is not None:
        header = f"{header} {meta.tokens()}"
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = np.ascontiguousarray(f.values, dtype="<f8").tobytes()
    path.write_bytes(header.encode("ascii") + b"\n" + payload)
    return path


def read_wgl(path: Path) -> ScalarField:
    raw = Path(path).read_bytes()
    newline = raw.find(b"\n")
    if newline < 0:
        raise GridError(f"{path}: missing WGL1 header line")
    tokens = raw[:newline].decode("ascii").split()
    if len(tokens) < 7 or tokens[0] != WGL_MAGIC:
        raise GridError(f"{path}: not a WGL1 file")
    nx, ny = int(tokens[1]), int(tokens[2])
    h, x0, y0 = float(tokens[3]), float(tokens[4]), float(tokens[5])
    grid = Grid(nx=nx, ny=ny, h=h, x0=x0, y0=y0, boundary_mode=tokens[6])
    data = np.frombuffer(raw, dtype="<f8", offset=newline + 1)
    if data.size != nx * ny:
        raise GridError(f"{path}: expected {nx * ny} values, found {data.size}")
    return ScalarField(grid, data.reshape(ny, nx))


def _comment_line(meta: ArtifactMeta | None) -> str:
    return f"# {meta.tokens()}\n" if meta is not None else ""


def write_table(path: Path, frame: pd.DataFrame, meta: ArtifactMeta | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buffer = io.StringIO()
    frame.to_csv(buffer, index=False, lineterminator="\n")
    path.write_text(_comment_line(meta) + buffer.getvalue(), encoding="utf-8")
    return path


def write_field_csv(path: Path, f: ScalarField, meta: ArtifactMeta | None = None) -> Path:
    """`x,y,value` rows in WGL1 order."""
    X, Y = f.grid.coords()
    frame = pd.DataFrame({"x": X.ravel(), "y": Y.ravel(), "value": f.values.ravel()})
    return write_table(path, frame, meta)


def write_rows_csv(
    path: Path, records: Iterable[dict[str, Any]], columns: list[str], meta: ArtifactMeta | None = None
) -> Path:
    return write_table(path, pd.DataFrame(list(records), columns=columns), meta)


def read_table(path: Path) -> pd.DataFrame:
    return pd.read_csv(path, comment="#")


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        # NaN/inf are not valid JSON
        return value if math.isfinite(value) else None
    return value


def write_json(path: Path, payload: dict[str, Any], meta: ArtifactMeta | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = dict(payload)
    if meta is not None:
        body["meta"] = meta.as_dict()
    path.write_text(json.dumps(_jsonable(body), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.debug("wrote %s", path)
    return path
