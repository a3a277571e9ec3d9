"""File formats: CurveDocument JSON, trajectory and kernel CSV, SVG frames, run manifests.

Floats are written with ``repr``, the shortest decimal string that reads back
to the same double, so saving and loading is lossless and repeated runs
produce byte-identical files.
"""
from __future__ import annotations

import csv
import hashlib
import json
import re
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Literal

import numpy as np
import pydantic
from pydantic import BaseModel, ConfigDict, Field, ValidationInfo, field_validator

from .config import SCHEMA_VERSION
from .curve import Covector, Polygon, VertexField, require_zero_sum
from .dynamics import Trajectory
from .errors import (
    ConstraintViolation,
    DegenerateEdge,
    DegenerateLandmarks,
    InvalidInput,
    NotMeanZero,
    NotSumZero,
    SchemaError,
    ValidationError,
)
from .landmarks import LandmarkConfig
from .srvt import SqrtVelocityPair

Role = Literal["polygon", "tangent", "covector", "srv_pair"]
DocumentValue = Polygon | VertexField | Covector | SqrtVelocityPair

_VERTEX_COLUMN = re.compile(r"^c(\d+)_(\d+)$")


class GridSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n: int = Field(ge=1)
    d: int = Field(ge=1)


class Flags(BaseModel):
    model_config = ConfigDict(extra="forbid")

    mean_zero: bool = False
    sum_zero: bool = False


class CurveDocument(BaseModel):
    """Versioned JSON document holding one n x d array and its declared role.

    ``srv_pair`` documents store the pair (e_i, f_i) as row i, so d = 2.
    """

    model_config = ConfigDict(extra="forbid", allow_inf_nan=False)

    schema_version: int = SCHEMA_VERSION
    grid: GridSpec
    role: Role
    values: list[list[float]]
    flags: Flags = Field(default_factory=Flags)
    metadata: dict[str, Any] = Field(default_factory=dict)

    @field_validator("schema_version")
    @classmethod
    def _known_version(cls, version: int) -> int:
        if version != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema version {version}, expected {SCHEMA_VERSION}")
        return version

    @field_validator("values")
    @classmethod
    def _matches_grid(cls, values: list[list[float]], info: ValidationInfo) -> list[list[float]]:
        grid = info.data.get("grid")
        if grid is None:
            return values
        if len(values) != grid.n:
            raise ValueError(f"expected {grid.n} rows, got {len(values)}")
        for index, row in enumerate(values):
            if len(row) != grid.d:
                raise ValueError(f"row {index} has {len(row)} entries, expected {grid.d}")
        if info.data.get("role") == "srv_pair" and grid.d != 2:
            raise ValueError("srv_pair documents need d = 2")
        return values

    def array(self) -> np.ndarray:
        return np.array(self.values, dtype=float)


def _error_path(error: dict[str, Any]) -> str:
    return ".".join(str(part) for part in error["loc"])


def parse_document(payload: Any) -> CurveDocument:
    try:
        return CurveDocument.model_validate(payload)
    except pydantic.ValidationError as exc:
        first = exc.errors()[0]
        raise SchemaError(first["msg"], _error_path(first)) from exc


def load_document(path: str | Path) -> CurveDocument:
    """Read a CurveDocument; malformed JSON or schema mismatches raise SchemaError."""
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON ({exc.msg} at line {exc.lineno})", "$") from exc
    return parse_document(payload)


def dump_document(doc: CurveDocument) -> str:
    return json.dumps(doc.model_dump(mode="json"), indent=2) + "\n"


def save_document(doc: CurveDocument, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_document(doc), encoding="utf-8")
    return path


def validate_document(doc: CurveDocument) -> DocumentValue:
    """Typed value of a document, re-checking every invariant its flags declare.

    Raises:
        ValidationError: naming the violated invariant.
    """
    values = doc.array()
    try:
        if doc.role == "polygon":
            return Polygon(values, mean_zero=doc.flags.mean_zero)
        if doc.role == "tangent":
            return VertexField(values, mean_zero=doc.flags.mean_zero)
        if doc.role == "covector":
            return Covector(values, sum_zero=doc.flags.sum_zero)
        return SqrtVelocityPair(values[:, 0], values[:, 1])
    except NotMeanZero as exc:
        raise ValidationError(str(exc), "mean_zero") from exc
    except NotSumZero as exc:
        raise ValidationError(str(exc), "sum_zero") from exc
    except ConstraintViolation as exc:
        raise ValidationError(str(exc), "closedness") from exc
    except DegenerateEdge as exc:
        raise ValidationError(str(exc), "immersion") from exc
    except InvalidInput as exc:
        raise ValidationError(str(exc), "shape") from exc


def validate_landmarks(doc: CurveDocument, sigma: float) -> LandmarkConfig:
    """Landmark configuration stored in a polygon document.

    Raises:
        ValidationError: for another role, coincident landmarks ("distinct")
            or a false mean-zero flag.
    """
    if doc.role != "polygon":
        raise ValidationError(f"landmarks are stored in polygon documents, got {doc.role}", "role")
    try:
        landmarks = LandmarkConfig(doc.array(), sigma)
        if doc.flags.mean_zero:
            require_zero_sum(landmarks.points, NotMeanZero, "landmarks are not mean-zero")
    except DegenerateLandmarks as exc:
        raise ValidationError(str(exc), "distinct") from exc
    except NotMeanZero as exc:
        raise ValidationError(str(exc), "mean_zero") from exc
    return landmarks


def from_value(value: DocumentValue, metadata: dict[str, Any] | None = None) -> CurveDocument:
    if isinstance(value, Polygon):
        role, array, flags = "polygon", value.vertices, Flags(mean_zero=value.mean_zero)
    elif isinstance(value, VertexField):
        role, array, flags = "tangent", value.values, Flags(mean_zero=value.mean_zero)
    elif isinstance(value, Covector):
        role, array, flags = "covector", value.values, Flags(sum_zero=value.sum_zero)
    elif isinstance(value, SqrtVelocityPair):
        role, array, flags = "srv_pair", np.column_stack((value.e, value.f)), Flags()
    else:
        raise InvalidInput(f"cannot serialize {type(value).__name__}")
    n, d = array.shape
    return CurveDocument(
        grid=GridSpec(n=n, d=d), role=role, values=array.tolist(), flags=flags, metadata=metadata or {}
    )


def _format(value: float) -> str:
    return repr(float(value))


def trajectory_columns(traj: Trajectory) -> list[str]:
    """CSV header: t, then c{i}_{k} for vertex i and coordinate k (1-based), then diagnostics.

    Vector diagnostics get one column per coordinate, e.g. momentum_sum_1.
    """
    _, n, d = traj.positions.shape
    columns = ["t"] + [f"c{i}_{k}" for i in range(1, n + 1) for k in range(1, d + 1)]
    for name, series in traj.diagnostics.items():
        if series.ndim == 1:
            columns.append(name)
        else:
            columns.extend(f"{name}_{k}" for k in range(1, series.shape[1] + 1))
    return columns


def write_trajectory_csv(traj: Trajectory, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(trajectory_columns(traj))
        for index, t in enumerate(traj.times):
            row = [_format(t)] + [_format(x) for x in traj.positions[index].ravel()]
            for series in traj.diagnostics.values():
                row.extend(_format(x) for x in np.atleast_1d(series[index]))
            writer.writerow(row)
    return path


def read_trajectory_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Sample times and vertex positions (samples x n x d) of a trajectory CSV."""
    with Path(path).open(newline="", encoding="utf-8") as handle:
        rows = list(csv.reader(handle))
    if not rows:
        raise SchemaError("empty trajectory file", "$")
    header, body = rows[0], rows[1:]
    if not header or header[0] != "t":
        raise SchemaError("first column must be t", "header")
    vertex_columns = [(idx, _VERTEX_COLUMN.match(name)) for idx, name in enumerate(header)]
    vertex_columns = [(idx, match) for idx, match in vertex_columns if match]
    if not vertex_columns:
        raise SchemaError("no vertex columns c{i}_{k}", "header")
    n = max(int(match.group(1)) for _, match in vertex_columns)
    d = max(int(match.group(2)) for _, match in vertex_columns)
    if len(vertex_columns) != n * d:
        raise SchemaError(f"expected {n * d} vertex columns, found {len(vertex_columns)}", "header")
    try:
        data = np.array([[float(x) for x in row] for row in body], dtype=float).reshape(len(body), len(header))
    except ValueError as exc:
        raise SchemaError(f"non-numeric or ragged row ({exc})", "rows") from exc
    times = data[:, 0]
    positions = np.empty((len(body), n, d))
    for idx, match in vertex_columns:
        positions[:, int(match.group(1)) - 1, int(match.group(2)) - 1] = data[:, idx]
    return times, positions


def write_kernel_csv(weights: np.ndarray, path: str | Path) -> Path:
    """n x n weight grid, one row per line, no header."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        for row in np.asarray(weights, dtype=float):
            writer.writerow(_format(x) for x in row)
    return path


def read_kernel_csv(path: str | Path) -> np.ndarray:
    with Path(path).open(newline="", encoding="utf-8") as handle:
        return np.array([[float(x) for x in row] for row in csv.reader(handle)], dtype=float)


def _svg_frame(points: np.ndarray, t: float, bounds: tuple[float, float, float, float]) -> str:
    xmin, ymin, width, height = bounds
    closed = np.vstack((points, points[:1]))
    coordinates = " ".join(f"{_format(x)},{_format(-y)}" for x, y in closed[:, :2])
    stroke = 0.005 * max(width, height)
    return (
        '<svg xmlns="http://www.w3.org/2000/svg" '
        f'viewBox="{_format(xmin)} {_format(ymin)} {_format(width)} {_format(height)}">\n'
        f"  <title>t={_format(t)}</title>\n"
        f'  <polyline points="{coordinates}" fill="none" stroke="black" stroke-width="{_format(stroke)}"/>\n'
        "</svg>\n"
    )


def render_frames(times: np.ndarray, positions: np.ndarray, out_dir: str | Path, workers: int = 1) -> list[Path]:
    """Write frame_00000.svg, ... with one closed polyline per stored sample.

    All frames share one view box fitted to every sample; only the first two
    coordinates are drawn.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    planar = positions[:, :, :2]
    low = planar.reshape(-1, 2).min(axis=0)
    high = planar.reshape(-1, 2).max(axis=0)
    margin = 0.05 * max(float((high - low).max()), 1e-12)
    # y is flipped so the picture is drawn with the usual orientation
    bounds = (low[0] - margin, -high[1] - margin, high[0] - low[0] + 2 * margin, high[1] - low[1] + 2 * margin)
    paths = [out_dir / f"frame_{index:05d}.svg" for index in range(len(times))]

    def write(index: int) -> None:
        paths[index].write_text(_svg_frame(planar[index], times[index], bounds), encoding="utf-8")

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        list(pool.map(write, range(len(times))))
    return paths


class RunManifest(BaseModel):
    """Record of one CLI run, written whether the run succeeded or not."""

    command: str
    config: dict[str, Any] = Field(default_factory=dict)
    input_hashes: dict[str, str] = Field(default_factory=dict)
    outputs: list[str] = Field(default_factory=list)
    tool_version: str
    wall_time: float = 0.0
    exit_code: int = 0
    abort_reason: str | None = None


def compute_hash(filename: str | Path) -> str:
    """Computes the SHA256 hash of a file."""
    hasher = hashlib.sha256()
    with open(filename, "rb") as f:
        hasher.update(f.read())
    return hasher.hexdigest()


def write_manifest(manifest: RunManifest, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest.model_dump(mode="json"), indent=2) + "\n", encoding="utf-8")
    return path
