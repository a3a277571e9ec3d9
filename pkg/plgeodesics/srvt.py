"""Discrete basic mapping from square-root-velocity pairs to planar polygons.

A pair (e, f) is piecewise constant on the uniform grid. Writing z = e + i f,
edge i of the image polygon is z_i^2 w / 2 with w = 2*pi/n, so the polygon
closes exactly when sum(e^2 - f^2) = sum(e f) = 0 and its edge lengths are
|z_i|^2 w / 2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numpy.typing import ArrayLike

from .config import EPS_SRV_REL, SRV_CONSTRAINT_RTOL
from .curve import GridInfo, Polygon, VertexField
from .errors import ConstraintViolation, DegenerateEdge, InvalidInput
from .metric import metric


def constraint_residuals(e: np.ndarray, f: np.ndarray) -> tuple[float, float]:
    """(sum(e^2 - f^2), sum(e f))."""
    return float(np.sum(e * e - f * f)), float(np.sum(e * f))


@dataclass(frozen=True, eq=False)
class SqrtVelocityPair:
    e: np.ndarray
    f: np.ndarray

    def __post_init__(self):
        e = np.array(self.e, dtype=float)
        f = np.array(self.f, dtype=float)
        if e.ndim != 1 or e.shape != f.shape:
            raise InvalidInput(f"e and f must be 1-D arrays of equal length, got {e.shape} and {f.shape}")
        if not (np.all(np.isfinite(e)) and np.all(np.isfinite(f))):
            raise InvalidInput("square-root-velocity pair contains non-finite entries")
        GridInfo(e.size, 2)

        speed = e * e + f * f
        scale = float(speed.sum())
        closing, orthogonal = constraint_residuals(e, f)
        limit = SRV_CONSTRAINT_RTOL * scale
        if abs(closing) > limit or abs(orthogonal) > limit:
            raise ConstraintViolation(
                f"pair violates the closedness constraints (sum e^2-f^2={closing:.3e}, sum ef={orthogonal:.3e})"
            )
        if not speed.min() > EPS_SRV_REL * speed.max():
            raise DegenerateEdge(f"square-root velocity nearly vanishes on cell {int(np.argmin(speed)) + 1}")
        for arr in (e, f):
            arr.setflags(write=False)
        object.__setattr__(self, "e", e)
        object.__setattr__(self, "f", f)

    @classmethod
    def from_complex(cls, z: ArrayLike) -> SqrtVelocityPair:
        z = np.asarray(z, dtype=complex)
        return cls(z.real, z.imag)

    @property
    def grid(self) -> GridInfo:
        return GridInfo(self.e.size, 2)

    @property
    def z(self) -> np.ndarray:
        return self.e + 1j * self.f

    def __neg__(self) -> SqrtVelocityPair:
        return SqrtVelocityPair(-self.e, -self.f)


class IsometryReport(NamedTuple):
    pullback_value: float
    flat_value: float
    ell_c: float

    @property
    def isometry_ratio(self) -> float:
        """pullback * l_c / flat, which equals 2 for every pair and tangent."""
        return self.pullback_value * self.ell_c / self.flat_value


def _spacing(s: SqrtVelocityPair) -> float:
    return 2 * math.pi / s.e.size


def _tangent(s: SqrtVelocityPair, ds_pair: tuple[ArrayLike, ArrayLike]) -> tuple[np.ndarray, np.ndarray]:
    de = np.asarray(ds_pair[0], dtype=float)
    df = np.asarray(ds_pair[1], dtype=float)
    if de.shape != s.e.shape or df.shape != s.e.shape:
        raise InvalidInput(f"tangent pair must have shape {s.e.shape}, got {de.shape} and {df.shape}")
    first = float(np.sum(s.e * de - s.f * df))
    second = float(np.sum(s.e * df + s.f * de))
    limit = SRV_CONSTRAINT_RTOL * math.sqrt(float(np.sum(s.e**2 + s.f**2)) * float(np.sum(de**2 + df**2)))
    if abs(first) > limit or abs(second) > limit:
        raise ConstraintViolation(f"tangent violates the linearized constraints ({first:.3e}, {second:.3e})")
    return de, df


def _centered_polygon_points(edges: np.ndarray) -> np.ndarray:
    points = np.zeros(edges.size, dtype=complex)
    points[1:] = np.cumsum(edges[:-1])
    points -= points.mean()
    return np.column_stack((points.real, points.imag))


def phi(s: SqrtVelocityPair) -> Polygon:
    """Polygon with edges z_i^2 w / 2, re-centered to the mean-zero chart."""
    return Polygon(_centered_polygon_points(0.5 * s.z**2 * _spacing(s)), mean_zero=True)


def phi_tangent(s: SqrtVelocityPair, ds_pair: tuple[ArrayLike, ArrayLike]) -> VertexField:
    """Derivative of phi at s along (de, df); edge i moves by z_i (de_i + i df_i) w."""
    de, df = _tangent(s, ds_pair)
    return VertexField(_centered_polygon_points(s.z * (de + 1j * df) * _spacing(s)), mean_zero=True)


def project_srv_tangent(s: SqrtVelocityPair, de: ArrayLike, df: ArrayLike) -> tuple[np.ndarray, np.ndarray]:
    """Orthogonal projection of (de, df) onto the tangent space of the constraint set.

    The constraint normals (e, -f) and (f, e) are orthogonal with equal norms.
    """
    de = np.asarray(de, dtype=float)
    df = np.asarray(df, dtype=float)
    norm2 = float(np.sum(s.e**2 + s.f**2))
    first = float(np.sum(s.e * de - s.f * df)) / norm2
    second = float(np.sum(s.f * de + s.e * df)) / norm2
    return de - first * s.e - second * s.f, df + first * s.f - second * s.e


def random_stiefel_pair(rng: np.random.Generator, n: int, length: float = 1.0) -> SqrtVelocityPair:
    """Random pair whose image polygon has total length ``length``.

    The columns of an orthonormal n x 2 frame satisfy both constraints exactly.
    """
    frame, _ = np.linalg.qr(rng.standard_normal((n, 2)))
    scale = math.sqrt(length / (2 * math.pi / n))
    return SqrtVelocityPair(scale * frame[:, 0], scale * frame[:, 1])


def pullback_isometry_defect(s: SqrtVelocityPair, ds_pair: tuple[ArrayLike, ArrayLike]) -> IsometryReport:
    """Elastic energy of the pushed-forward tangent, its flat energy and l_c."""
    de, df = _tangent(s, ds_pair)
    c = phi(s)
    h = phi_tangent(s, (de, df))
    flat = float(np.sum(de**2 + df**2)) * _spacing(s)
    return IsometryReport(metric(c, h, h), flat, c.total_length)
