"""Planar diagnostics of polygons: winding and turning numbers, self-intersections."""
from __future__ import annotations

import math
from itertools import combinations
from typing import NamedTuple

import numpy as np
from numpy.typing import ArrayLike

from .config import EPS_GEO
from .curve import Polygon
from .errors import InvalidInput, PointOnCurve


class Intersection(NamedTuple):
    edge_i: int
    edge_j: int
    point: tuple[float, float]


def _require_planar(c: Polygon) -> None:
    if c.d != 2:
        raise InvalidInput(f"planar diagnostics need d = 2, got d = {c.d}")


def _cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def distance_to_polygon(c: Polygon, p: ArrayLike) -> float:
    _require_planar(c)
    p = np.asarray(p, dtype=float)
    offsets = p - c.vertices
    t = np.clip(np.einsum("ij,ij->i", offsets, c.edges) / c.edge_lengths**2, 0.0, 1.0)
    return float(np.linalg.norm(offsets - t[:, None] * c.edges, axis=1).min())


def winding_number(c: Polygon, p: ArrayLike = (0.0, 0.0)) -> int:
    """Degree of c around p by summing the signed angles subtended by the edges.

    Raises:
        PointOnCurve: if p lies within EPS_GEO of the polygon.
    """
    _require_planar(c)
    if distance_to_polygon(c, p) <= EPS_GEO:
        raise PointOnCurve(f"point {tuple(np.asarray(p, dtype=float))} lies on the polygon")
    start = c.vertices - np.asarray(p, dtype=float)
    end = np.roll(start, -1, axis=0)
    angles = np.arctan2(_cross(start, end), np.einsum("ij,ij->i", start, end))
    return int(round(float(angles.sum()) / (2 * math.pi)))


def turning_angle_sum(c: Polygon) -> float:
    """Sum of the signed exterior angles between consecutive edges."""
    _require_planar(c)
    incoming = c.edges
    outgoing = np.roll(c.edges, -1, axis=0)
    return float(np.arctan2(_cross(incoming, outgoing), np.einsum("ij,ij->i", incoming, outgoing)).sum())


def turning_number(c: Polygon) -> int:
    return int(round(turning_angle_sum(c) / (2 * math.pi)))


def _segment_intersection(a0, a1, b0, b1) -> tuple[float, float] | None:
    da, db = a1 - a0, b1 - b0
    denom = float(_cross(da, db))
    offset = b0 - a0
    scale = max(float(np.dot(da, da)), float(np.dot(db, db)))
    if abs(denom) > EPS_GEO * scale:
        s = float(_cross(offset, db)) / denom
        u = float(_cross(offset, da)) / denom
        tol = EPS_GEO
        if -tol <= s <= 1 + tol and -tol <= u <= 1 + tol:
            point = a0 + s * da
            return float(point[0]), float(point[1])
        return None
    # parallel: only collinear overlaps count
    if abs(float(_cross(offset, da))) > EPS_GEO * math.sqrt(scale) * max(1.0, math.sqrt(float(np.dot(da, da)))):
        return None
    length2 = float(np.dot(da, da))
    t0 = float(np.dot(b0 - a0, da)) / length2
    t1 = float(np.dot(b1 - a0, da)) / length2
    lo, hi = max(0.0, min(t0, t1)), min(1.0, max(t0, t1))
    if hi < lo - EPS_GEO:
        return None
    point = a0 + 0.5 * (lo + hi) * da
    return float(point[0]), float(point[1])


def _overlap_length(a0, a1, b0, b1) -> float:
    da = a1 - a0
    length2 = float(np.dot(da, da))
    if abs(float(_cross(da, b1 - b0))) > EPS_GEO * max(length2, float(np.dot(b1 - b0, b1 - b0))):
        return 0.0
    t0 = float(np.dot(b0 - a0, da)) / length2
    t1 = float(np.dot(b1 - a0, da)) / length2
    return max(0.0, min(1.0, max(t0, t1)) - max(0.0, min(t0, t1))) * math.sqrt(length2)


def self_intersections(c: Polygon) -> list[Intersection]:
    """All intersecting edge pairs (1-based edge numbers) with a representative point.

    Non-adjacent pairs count whenever they touch. Adjacent pairs share a vertex
    and count only when they fold back onto each other over a positive length.
    Collinear overlaps are represented by the midpoint of the overlap.
    """
    _require_planar(c)
    n = c.n
    starts = c.vertices
    ends = np.roll(c.vertices, -1, axis=0)
    found = []
    for i, j in combinations(range(n), 2):
        adjacent = j == i + 1 or (i == 0 and j == n - 1)
        if adjacent:
            if _overlap_length(starts[i], ends[i], starts[j], ends[j]) <= EPS_GEO:
                continue
        point = _segment_intersection(starts[i], ends[i], starts[j], ends[j])
        if point is not None:
            found.append(Intersection(i + 1, j + 1, point))
    return found
