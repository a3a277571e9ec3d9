"""Polygonal closed curves on the uniform grid and the discrete arc-length operators.

Arrays are 0-based; docstrings use the 1-based vertex numbering of the
formulas, so vertex i is ``values[i-1]``. Edge i joins vertex i to vertex
i+1 and all index arithmetic wraps around modulo n.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike

from .config import EPS_EDGE_REL, EPS_MEAN_ZERO
from .errors import (
    DegenerateEdge,
    GridMismatch,
    InvalidInput,
    NotDsMeanZero,
    NotMeanZero,
    NotSumZero,
)


def _frozen_array(values: ArrayLike, what: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != 2:
        raise InvalidInput(f"{what} must be an n x d array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInput(f"{what} contains non-finite entries")
    arr.setflags(write=False)
    return arr


def _tolerance(values: np.ndarray) -> float:
    # absolute for O(1) data, relative beyond
    return EPS_MEAN_ZERO * max(1.0, float(np.abs(values).max(initial=0.0)))


def _vector_sum(values: np.ndarray) -> np.ndarray:
    return values.sum(axis=0)


@dataclass(frozen=True)
class GridInfo:
    """Vertex count and ambient dimension of the uniform grid theta^i = 2*pi*(i-1)/n."""

    n: int
    d: int

    def __post_init__(self):
        if self.n < 2:
            raise InvalidInput(f"a closed polygon needs n >= 2 vertices, got {self.n}")
        if self.d < 2:
            raise InvalidInput(f"ambient dimension must be >= 2, got {self.d}")

    @property
    def spacing(self) -> float:
        return 2 * math.pi / self.n

    def thetas(self) -> np.ndarray:
        return self.spacing * np.arange(self.n)


@dataclass(frozen=True, eq=False)
class Polygon:
    """A point of the space of piecewise-linear immersions.

    Edge lengths, tail sums lambda^i = sum_{j>=i} l^j, weighted tail sums
    kappa^i = sum_{j>=i} j*l^j and the total length are computed once at
    construction; the vertex array is read-only.
    """

    vertices: np.ndarray
    mean_zero: bool = False
    edge_guard: float = EPS_EDGE_REL
    grid: GridInfo = field(init=False)
    edges: np.ndarray = field(init=False, repr=False)
    edge_lengths: np.ndarray = field(init=False, repr=False)
    tail_sums: np.ndarray = field(init=False, repr=False)
    weighted_tail_sums: np.ndarray = field(init=False, repr=False)
    total_length: float = field(init=False)

    def __post_init__(self):
        vertices = _frozen_array(self.vertices, "polygon vertices")
        grid = GridInfo(*vertices.shape)
        edges = np.roll(vertices, -1, axis=0) - vertices
        lengths = np.linalg.norm(edges, axis=1)
        guard = self.edge_guard * max(1.0, float(lengths.sum()))
        shortest = int(np.argmin(lengths))
        if lengths[shortest] <= guard:
            raise DegenerateEdge(
                f"edge {shortest + 1} has length {lengths[shortest]:.3e} <= guard {guard:.3e}",
                min_edge=float(lengths[shortest]),
            )
        if self.mean_zero:
            require_zero_sum(vertices, NotMeanZero, "polygon vertices are not mean-zero")

        tail = np.cumsum(lengths[::-1])[::-1]
        weighted = np.cumsum((np.arange(1, grid.n + 1) * lengths)[::-1])[::-1]
        for arr in (edges, lengths, tail, weighted):
            arr.setflags(write=False)

        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "edge_lengths", lengths)
        object.__setattr__(self, "tail_sums", tail)
        object.__setattr__(self, "weighted_tail_sums", weighted)
        object.__setattr__(self, "total_length", float(tail[0]))

    @classmethod
    def from_vertices(cls, vertices: ArrayLike, *, recenter: bool = False, edge_guard: float = EPS_EDGE_REL) -> Polygon:
        """Build a polygon; ``recenter=True`` applies pi1 and flags the result mean-zero."""
        arr = np.asarray(vertices, dtype=float)
        if recenter:
            arr = arr - arr.mean(axis=0)
        return cls(arr, mean_zero=recenter, edge_guard=edge_guard)

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def d(self) -> int:
        return self.grid.d

    @property
    def min_edge(self) -> float:
        return float(self.edge_lengths.min())

    @property
    def unit_tangents(self) -> np.ndarray:
        return self.edges / self.edge_lengths[:, None]

    def centered(self) -> Polygon:
        return Polygon.from_vertices(self.vertices, recenter=True, edge_guard=self.edge_guard)


@dataclass(frozen=True, eq=False)
class VertexField:
    """Values at the vertices: a tangent vector in P1 (mean-zero when in P1_0)."""

    values: np.ndarray
    mean_zero: bool = False
    grid: GridInfo = field(init=False)

    def __post_init__(self):
        values = _frozen_array(self.values, "vertex field")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "grid", GridInfo(*values.shape))
        if self.mean_zero:
            require_zero_sum(values, NotMeanZero, "vertex field is not mean-zero")

    @classmethod
    def zeros(cls, grid: GridInfo) -> VertexField:
        return cls(np.zeros((grid.n, grid.d)), mean_zero=True)

    @classmethod
    def projected(cls, values: ArrayLike) -> VertexField:
        """Explicit re-projection onto the mean-zero subspace."""
        arr = np.asarray(values, dtype=float)
        return cls(arr - arr.mean(axis=0), mean_zero=True)

    def __add__(self, other: VertexField) -> VertexField:
        check_grid(self.grid, other.grid)
        return VertexField(self.values + other.values, mean_zero=self.mean_zero and other.mean_zero)

    def __sub__(self, other: VertexField) -> VertexField:
        check_grid(self.grid, other.grid)
        return VertexField(self.values - other.values, mean_zero=self.mean_zero and other.mean_zero)

    def __mul__(self, scalar: float) -> VertexField:
        return VertexField(float(scalar) * self.values, mean_zero=self.mean_zero)

    __rmul__ = __mul__

    def __neg__(self) -> VertexField:
        return VertexField(-self.values, mean_zero=self.mean_zero)

    def norm_inf(self) -> float:
        return float(np.abs(self.values).max())


@dataclass(frozen=True, eq=False)
class EdgeField:
    """Piecewise-constant data, one vector per edge (an element of P0)."""

    values: np.ndarray
    grid: GridInfo = field(init=False)

    def __post_init__(self):
        values = _frozen_array(self.values, "edge field")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "grid", GridInfo(*values.shape))


@dataclass(frozen=True, eq=False)
class Covector:
    """Coefficients alpha^i of the momentum sum_i alpha^i delta_{theta^i}.

    Sum-zero covectors represent (P1_0)*; unconstrained ones represent (P1)*.
    """

    values: np.ndarray
    sum_zero: bool = False
    grid: GridInfo = field(init=False)

    def __post_init__(self):
        values = _frozen_array(self.values, "covector")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "grid", GridInfo(*values.shape))
        if self.sum_zero:
            require_zero_sum(values, NotSumZero, "covector is not sum-zero")

    def total(self) -> np.ndarray:
        return _vector_sum(self.values)

    def pair(self, h: VertexField) -> float:
        """Euclidean pairing sum_i <alpha^i, h^i>."""
        check_grid(self.grid, h.grid)
        return float(np.sum(self.values * h.values))

    def restricted(self) -> Covector:
        """Restriction to mean-zero fields: subtracts the mean coefficient."""
        return Covector(self.values - self.values.mean(axis=0), sum_zero=True)


def check_grid(a: GridInfo, b: GridInfo) -> None:
    if a != b:
        raise GridMismatch(f"grid mismatch: n={a.n}, d={a.d} vs n={b.n}, d={b.d}")


def require_zero_sum(values: np.ndarray, error: type[Exception], message: str) -> None:
    residual = float(np.abs(_vector_sum(values)).max())
    if residual > _tolerance(values):
        raise error(f"{message} (|sum|={residual:.3e})")


def is_ds_mean_zero(c: Polygon, k: EdgeField) -> bool:
    """True when sum_i k^i l^i vanishes, i.e. k lies in P0_0 relative to c."""
    check_grid(c.grid, k.grid)
    weighted = k.values * c.edge_lengths[:, None]
    residual = float(np.abs(weighted.sum(axis=0)).max())
    return residual <= _tolerance(k.values) * c.total_length


def pi1(h: VertexField) -> VertexField:
    """(pi1 h)^i = h^i - (1/n) sum_j h^j."""
    return VertexField.projected(h.values)


def pi0(c: Polygon, k: EdgeField) -> EdgeField:
    """(pi0 k)^i = k^i - (1/l_c) sum_j k^j l^j."""
    check_grid(c.grid, k.grid)
    mean = (k.values * c.edge_lengths[:, None]).sum(axis=0) / c.total_length
    return EdgeField(k.values - mean)


def ds_derivative(c: Polygon, h: VertexField) -> EdgeField:
    """(D_s h)^i = (h^{i+1} - h^i) / l^i."""
    check_grid(c.grid, h.grid)
    return EdgeField((np.roll(h.values, -1, axis=0) - h.values) / c.edge_lengths[:, None])


def ds_antiderivative(c: Polygon, k: EdgeField) -> VertexField:
    """Mean-zero antiderivative of a ds-mean-zero edge field.

    (D_s^{-1} k)^i = sum_{j<i} k^j l^j - (1/n) sum_m sum_{j<m} k^j l^j

    Raises:
        NotDsMeanZero: if sum_i k^i l^i does not vanish, since the partial sums
            then do not close up into a field on the closed curve.
    """
    if not is_ds_mean_zero(c, k):
        raise NotDsMeanZero("edge field is not ds-mean-zero; apply pi0 first")
    increments = k.values * c.edge_lengths[:, None]
    partial = np.zeros_like(increments)
    partial[1:] = np.cumsum(increments[:-1], axis=0)
    return VertexField(partial - partial.mean(axis=0), mean_zero=True)


def mul_ds(c: Polygon, k: EdgeField) -> Covector:
    """(k ds)^i = k^i l^i; flagged sum-zero when k is ds-mean-zero."""
    check_grid(c.grid, k.grid)
    return Covector(k.values * c.edge_lengths[:, None], sum_zero=is_ds_mean_zero(c, k))


def div_ds(c: Polygon, b: Covector) -> EdgeField:
    """(beta/ds)^i = beta^i / l^i."""
    check_grid(c.grid, b.grid)
    return EdgeField(b.values / c.edge_lengths[:, None])


def ds_adjoint(c: Polygon, b: Covector) -> Covector:
    """(D_s^* beta)^i = beta^{i-1}/l^{i-1} - beta^i/l^i."""
    check_grid(c.grid, b.grid)
    scaled = b.values / c.edge_lengths[:, None]
    return Covector(np.roll(scaled, 1, axis=0) - scaled, sum_zero=True)


def ds_adjoint_inverse(c: Polygon, a: Covector) -> Covector:
    """((D_s^*)^{-1} alpha)^i = ((1/l_c) sum_j alpha^j lambda^j - sum_{j<=i} alpha^j) l^i."""
    check_grid(c.grid, a.grid)
    require_zero_sum(a.values, NotSumZero, "(D_s^*)^{-1} needs a sum-zero covector")
    offset = (a.values * c.tail_sums[:, None]).sum(axis=0) / c.total_length
    running = np.cumsum(a.values, axis=0)
    return Covector((offset - running) * c.edge_lengths[:, None], sum_zero=True)
