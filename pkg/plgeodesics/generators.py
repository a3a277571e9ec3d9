"""Fixture curves: the analytic diamond geodesic, regular and Fourier polygons, random data."""
from __future__ import annotations

import math

import numpy as np
from numpy.typing import ArrayLike

from .curve import Covector, GridInfo, Polygon, VertexField
from .errors import InvalidInput


def gen_diamond(t: float) -> tuple[Polygon, VertexField, VertexField]:
    """State (c, c_t, c_tt) at time t of the four-vertex diamond geodesic.

    c^1 = -c^3 = (sin t, 0) and c^2 = -c^4 = (0, cos t). Every edge has unit
    length for all t, so the state is a valid immersion even where opposite
    vertices meet.
    """
    s, co = math.sin(t), math.cos(t)
    c = np.array([[s, 0.0], [0.0, co], [-s, 0.0], [0.0, -co]])
    v = np.array([[co, 0.0], [0.0, -s], [-co, 0.0], [0.0, s]])
    return Polygon(c, mean_zero=True), VertexField(v, mean_zero=True), VertexField(-c, mean_zero=True)


def gen_regular_polygon(n: int, radius: float = 1.0, d: int = 2, phase: float = 0.0) -> Polygon:
    if n < 3:
        raise InvalidInput(f"a regular polygon needs n >= 3, got {n}")
    if radius <= 0:
        raise InvalidInput(f"radius must be positive, got {radius}")
    angles = GridInfo(n, d).thetas() + phase
    vertices = np.zeros((n, d))
    vertices[:, 0] = radius * np.cos(angles)
    vertices[:, 1] = radius * np.sin(angles)
    return Polygon.from_vertices(vertices, recenter=True)


def unit_square() -> Polygon:
    """Vertices (1,1), (-1,1), (-1,-1), (1,-1): every edge has length 2."""
    return Polygon(np.array([[1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0], [1.0, -1.0]]), mean_zero=True)


def _fourier_values(coefficients: ArrayLike, n: int) -> np.ndarray:
    coeffs = np.asarray(coefficients, dtype=float)
    if coeffs.ndim != 3 or coeffs.shape[1] != 2:
        raise InvalidInput(f"Fourier coefficients must have shape (K, 2, d), got {coeffs.shape}")
    grid = GridInfo(n, coeffs.shape[2])
    harmonics = np.arange(1, coeffs.shape[0] + 1)
    phases = np.outer(grid.thetas(), harmonics)
    return np.cos(phases) @ coeffs[:, 0] + np.sin(phases) @ coeffs[:, 1]


def gen_fourier_curve(coefficients: ArrayLike, n: int) -> Polygon:
    """Sample c(theta) = sum_k a_k cos(k theta) + b_k sin(k theta) at the n grid points.

    ``coefficients[k-1]`` holds the pair (a_k, b_k) of d-vectors.
    """
    return Polygon.from_vertices(_fourier_values(coefficients, n), recenter=True)


def fourier_field(coefficients: ArrayLike, n: int) -> VertexField:
    return VertexField.projected(_fourier_values(coefficients, n))


def random_polygon(rng: np.random.Generator, n: int, d: int = 2) -> Polygon:
    """Star-shaped random polygon with jittered angles, so edges stay well away from zero."""
    angles = 2 * math.pi * (np.arange(n) + rng.uniform(-0.3, 0.3, n)) / n
    radii = rng.uniform(0.6, 1.4, n)
    vertices = np.zeros((n, d))
    vertices[:, 0] = radii * np.cos(angles)
    vertices[:, 1] = radii * np.sin(angles)
    if d > 2:
        vertices[:, 2:] = rng.uniform(-0.3, 0.3, (n, d - 2))
    return Polygon.from_vertices(vertices, recenter=True)


def random_field(rng: np.random.Generator, n: int, d: int = 2, scale: float = 1.0) -> VertexField:
    return VertexField.projected(scale * rng.standard_normal((n, d)))


def random_covector(rng: np.random.Generator, n: int, d: int = 2, scale: float = 1.0) -> Covector:
    return Covector(scale * rng.standard_normal((n, d)))
