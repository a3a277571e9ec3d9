"""Scale-invariant H1 metric on polygons, its momentum map, cometrics and Hamiltonian.

Everything is expressed in vertex coordinates. Both kernels handled here are
isotropic, so matrices are kept as n x n scalar weights and expanded with the
d x d identity only when a dense matrix is asked for.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike
from scipy import linalg

from .config import PINV_RCOND
from .curve import Covector, Polygon, VertexField, check_grid, require_zero_sum
from .errors import InvalidInput, NotSumZero

KernelKind = Literal["elastic", "gaussian"]


@dataclass(frozen=True, eq=False)
class KernelMatrix:
    """Cometric matrix stored as n x n scalar weights, each block weight * I_d."""

    weights: np.ndarray
    d: int
    kind: KernelKind = "elastic"
    n: int = field(init=False)

    def __post_init__(self):
        weights = np.array(self.weights, dtype=float)
        if weights.ndim != 2 or weights.shape[0] != weights.shape[1]:
            raise InvalidInput(f"kernel weights must be square, got shape {weights.shape}")
        if self.d < 1:
            raise InvalidInput(f"ambient dimension must be positive, got {self.d}")
        weights.setflags(write=False)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "n", weights.shape[0])

    def dense(self) -> np.ndarray:
        """The assembled (n*d) x (n*d) matrix, vertex-major ordering."""
        return np.kron(self.weights, np.eye(self.d))

    def apply(self, a: Covector | ArrayLike) -> np.ndarray:
        values = a.values if isinstance(a, Covector) else np.asarray(a, dtype=float)
        return self.weights @ values

    def pairing(self, a: Covector | ArrayLike, b: Covector | ArrayLike) -> float:
        left = a.values if isinstance(a, Covector) else np.asarray(a, dtype=float)
        return float(np.sum(left * self.apply(b)))

    def eigenvalues(self) -> np.ndarray:
        """Ascending eigenvalues of the dense matrix (each weight eigenvalue repeated d times)."""
        return np.repeat(linalg.eigh(self.weights, eigvals_only=True), self.d)


def _differences(values: np.ndarray) -> np.ndarray:
    return np.roll(values, -1, axis=0) - values


def tail_sums(lengths: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(lambda, kappa) for an array of edge lengths."""
    tail = np.cumsum(lengths[::-1])[::-1]
    weighted = np.cumsum((np.arange(1, lengths.size + 1) * lengths)[::-1])[::-1]
    return tail, weighted


def restricted_weights(lengths: np.ndarray) -> np.ndarray:
    tail, _ = tail_sums(lengths)
    return tail[0] * np.minimum.outer(tail, tail) - np.outer(tail, tail)


def extended_weights(lengths: np.ndarray) -> np.ndarray:
    """Closed-form weights K_ij of the extended cometric for the given edge lengths.

    K_ij = l1 l^max(i,j) - l^i l^j + (k1/n)(l^i + l^j) - (l1/n)(k^i + k^j)
           - k1^2/n^2 + (l1/n^2) sum_k k^2 l^k

    with l = lambda and k = kappa, both 1-based.
    """
    n = lengths.size
    tail, weighted = tail_sums(lengths)
    total, first = tail[0], weighted[0]
    second_moment = float(np.sum(np.arange(1, n + 1) ** 2 * lengths))
    weights = restricted_weights(lengths)
    weights += (first / n) * np.add.outer(tail, tail)
    weights -= (total / n) * np.add.outer(weighted, weighted)
    weights += total * second_moment / n**2 - first**2 / n**2
    return weights


def hamiltonian_edge_gradient(lengths: np.ndarray, alpha: np.ndarray) -> tuple[float, np.ndarray]:
    """H and dH/dl^m in O(n d).

    With p the restriction of alpha to mean-zero fields, C_m = sum_{i<=m} p^i,
    S = sum_m l^m |C_m|^2 and L = sum_j lambda^j p^j:

        H = (lambda^1 S - |L|^2) / 2
        dH/dl^m = S/2 + lambda^1 |C_m|^2 / 2 - <L, C_m>
    """
    p = alpha - alpha.mean(axis=0)
    running = np.cumsum(p, axis=0)
    tail, _ = tail_sums(lengths)
    squared = np.einsum("ij,ij->i", running, running)
    spread = float(lengths @ squared)
    moment = tail @ p
    value = 0.5 * (tail[0] * spread - moment @ moment)
    gradient = 0.5 * spread + 0.5 * tail[0] * squared - running @ moment
    return value, gradient


def vertex_gradient(edges: np.ndarray, lengths: np.ndarray, edge_gradient: np.ndarray) -> np.ndarray:
    """Chain dF/dl^m to the vertices through dl^k/dc^k = -u^k, dl^k/dc^{k+1} = u^k."""
    pulled = edge_gradient[:, None] * edges / lengths[:, None]
    return np.roll(pulled, 1, axis=0) - pulled


def metric(c: Polygon, h: VertexField, k: VertexField) -> float:
    """G_c(h,k) = (1/l_c) sum_i <h^{i+1}-h^i, k^{i+1}-k^i> / l^i."""
    check_grid(c.grid, h.grid)
    check_grid(c.grid, k.grid)
    dh = _differences(h.values)
    dk = _differences(k.values)
    return float(np.sum(np.einsum("ij,ij->i", dh, dk) / c.edge_lengths) / c.total_length)


def momentum(c: Polygon, h: VertexField) -> Covector:
    """Covector dual to h, so that momentum(c,h).pair(k) == metric(c,h,k)."""
    check_grid(c.grid, h.grid)
    slopes = _differences(h.values) / c.edge_lengths[:, None]
    return Covector((np.roll(slopes, 1, axis=0) - slopes) / c.total_length, sum_zero=True)


def restricted_cometric_weights(c: Polygon) -> np.ndarray:
    """Weights lambda^1 lambda^max(i,j) - lambda^i lambda^j of the cometric on sum-zero covectors."""
    return restricted_weights(c.edge_lengths)


def cometric(c: Polygon, a: Covector, b: Covector) -> float:
    check_grid(c.grid, a.grid)
    check_grid(c.grid, b.grid)
    require_zero_sum(a.values, NotSumZero, "cometric needs sum-zero covectors")
    require_zero_sum(b.values, NotSumZero, "cometric needs sum-zero covectors")
    return float(np.sum(a.values * (restricted_cometric_weights(c) @ b.values)))


def extended_cometric_matrix(c: Polygon) -> KernelMatrix:
    return KernelMatrix(extended_weights(c.edge_lengths), c.d, "elastic")


def hamiltonian(c: Polygon, a: Covector) -> float:
    """H(c, alpha) = K_c(alpha, alpha) / 2."""
    check_grid(c.grid, a.grid)
    return 0.5 * extended_cometric_matrix(c).pairing(a, a)


def hamiltonian_gradient_c(c: Polygon, a: Covector) -> VertexField:
    check_grid(c.grid, a.grid)
    _, edge_gradient = hamiltonian_edge_gradient(c.edge_lengths, a.values)
    return VertexField(vertex_gradient(c.edges, c.edge_lengths, edge_gradient))


def metric_gram_weights(c: Polygon) -> np.ndarray:
    """n x n weights M with G_c(h,k) = sum_ij M_ij <h^i, k^j>."""
    n = c.n
    difference = np.roll(np.eye(n), -1, axis=0) - np.eye(n)
    return difference.T @ (difference / c.edge_lengths[:, None]) / c.total_length


def gram_matrix(c: Polygon) -> np.ndarray:
    return np.kron(metric_gram_weights(c), np.eye(c.d))


def pseudo_inverse(m: np.ndarray, rcond: float = PINV_RCOND) -> np.ndarray:
    """Moore-Penrose inverse of a symmetric matrix via a dense eigendecomposition.

    Eigenvalues below rcond * max|eigenvalue| are treated as zero.
    """
    values, vectors = linalg.eigh(m)
    cutoff = rcond * np.abs(values).max()
    inverted = np.zeros_like(values)
    keep = np.abs(values) > cutoff
    inverted[keep] = 1.0 / values[keep]
    return (vectors * inverted) @ vectors.T


def summation_identities(c: Polygon) -> dict[str, float]:
    """Residuals of the summation identities behind the closed-form extended cometric.

    All residuals vanish up to round-off for every valid polygon.
    """
    lengths = c.edge_lengths
    tail, weighted = c.tail_sums, c.weighted_tail_sums
    n = c.n
    index = np.arange(1, n + 1)
    shifted = np.append(tail[1:], 0.0)

    shift_residual = 0.0
    for j in range(1, n + 1):
        lhs = tail[j:].sum()
        rhs = np.sum((index[j:] - j) * lengths[j:])
        shift_residual = max(shift_residual, abs(lhs - rhs))

    weights = restricted_cometric_weights(c)
    second_moment = float(np.sum(index**2 * lengths))
    row_expected = tail[0] * weighted - weighted[0] * tail
    return {
        "tail_recursion": float(np.abs(tail - lengths - shifted).max()),
        "weighted_total": float(abs(weighted[0] - tail.sum())),
        "tail_shift": float(shift_residual),
        "row_sums": float(np.abs(weights.sum(axis=0) - row_expected).max()),
        "total_sum": float(abs(weights.sum() - (tail[0] * second_moment - weighted[0] ** 2))),
    }
