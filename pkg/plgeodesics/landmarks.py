"""Gaussian-kernel LDDMM on landmark configurations, next to the elastic cometric.

The elastic kernel of a configuration depends only on the distances between
consecutive landmarks, while the Gaussian kernel sees every pairwise distance.
``compare_flows`` runs both Hamiltonian flows from the same initial data.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike
from scipy.spatial.distance import pdist, squareform

from .config import DEFAULT_SIGMA, EPS_LAND_REL
from .curve import Covector, Polygon
from .dynamics import (
    HamiltonianState,
    IntegratorConfig,
    Trajectory,
    integrate_hamiltonian,
    rk4_stepper,
    run_fixed_step,
)
from .errors import DegenerateLandmarks, InvalidInput
from .metric import KernelMatrix, extended_cometric_matrix

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class LandmarkConfig:
    """Pairwise distinct points q^1..q^n in R^d with the Gaussian kernel width sigma."""

    points: np.ndarray
    sigma: float = DEFAULT_SIGMA
    min_distance: float = field(init=False)
    diameter: float = field(init=False)

    def __post_init__(self):
        points = np.array(self.points, dtype=float)
        if points.ndim != 2 or points.shape[0] < 1 or points.shape[1] < 1:
            raise InvalidInput(f"landmarks must be an n x d array, got shape {points.shape}")
        if not np.all(np.isfinite(points)):
            raise InvalidInput("landmarks contain non-finite coordinates")
        if not self.sigma > 0:
            raise InvalidInput(f"kernel width must be positive, got {self.sigma}")
        points.setflags(write=False)
        object.__setattr__(self, "points", points)

        distances = pdist(points)
        if distances.size:
            closest, diameter = float(distances.min()), float(distances.max())
            if closest <= EPS_LAND_REL * diameter or diameter == 0.0:
                raise DegenerateLandmarks(f"landmarks are not pairwise distinct (min distance {closest:.3e})", min_distance=closest)
        else:
            closest, diameter = float("inf"), 0.0
        object.__setattr__(self, "min_distance", closest)
        object.__setattr__(self, "diameter", diameter)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def collision_guard(self) -> float:
        return EPS_LAND_REL * self.diameter


@dataclass(frozen=True)
class FlowComparison:
    """Elastic and Gaussian Hamiltonian flows from the same landmarks and momenta."""

    elastic: Trajectory
    lddmm: Trajectory

    @property
    def elastic_min_edge(self) -> np.ndarray:
        return self.elastic.diagnostics["min_edge"]

    @property
    def lddmm_min_distance(self) -> np.ndarray:
        return self.lddmm.diagnostics["min_distance"]


def gaussian_weights(points: np.ndarray, sigma: float) -> np.ndarray:
    """k_ij = exp(-|q^i - q^j|^2 / (2 sigma^2))."""
    return np.exp(-squareform(pdist(points, "sqeuclidean")) / (2.0 * sigma**2))


def lddmm_kernel_matrix(q: LandmarkConfig) -> KernelMatrix:
    return KernelMatrix(gaussian_weights(q.points, q.sigma), q.d, "gaussian")


def elastic_kernel_weights(q: LandmarkConfig | ArrayLike) -> np.ndarray:
    """Extended elastic cometric weights of the closed polygon through the landmarks.

    Only consecutive landmarks need to be distinct, so raw arrays are accepted
    as well as validated configurations.
    """
    points = q.points if isinstance(q, LandmarkConfig) else q
    return extended_cometric_matrix(Polygon(points)).weights


def lddmm_hamiltonian(q: LandmarkConfig, p: Covector | ArrayLike) -> float:
    """H(q,p) = sum_ij k_ij <p^i, p^j> / 2."""
    momenta = _momenta(q, p)
    return 0.5 * float(np.sum(momenta * (gaussian_weights(q.points, q.sigma) @ momenta)))


def lddmm_hamiltonian_gradient(q: LandmarkConfig, p: Covector | ArrayLike) -> np.ndarray:
    """dH/dq^i = -(1/sigma^2) sum_j <p^i, p^j> k_ij (q^i - q^j)."""
    return _gradient(q.points, _momenta(q, p), q.sigma)


def _momenta(q: LandmarkConfig, p: Covector | ArrayLike) -> np.ndarray:
    momenta = p.values if isinstance(p, Covector) else np.asarray(p, dtype=float)
    if momenta.shape != q.points.shape:
        raise InvalidInput(f"momenta shape {momenta.shape} does not match landmarks {q.points.shape}")
    return momenta


def _gradient(points: np.ndarray, momenta: np.ndarray, sigma: float) -> np.ndarray:
    coupling = (momenta @ momenta.T) * gaussian_weights(points, sigma)
    return -(coupling.sum(axis=1)[:, None] * points - coupling @ points) / sigma**2


def _diagnostics(positions: np.ndarray, momenta: np.ndarray, sigma: float) -> dict[str, np.ndarray]:
    energy, closest, momentum_sum, vertex_sum = [], [], [], []
    for q, p in zip(positions, momenta):
        energy.append(float(np.sum(p * (gaussian_weights(q, sigma) @ p))))
        distances = pdist(q)
        closest.append(float(distances.min()) if distances.size else float("inf"))
        momentum_sum.append(p.sum(axis=0))
        vertex_sum.append(float(np.abs(q.sum(axis=0)).max()))
    return {
        "energy": np.array(energy),
        "min_distance": np.array(closest),
        "vertex_sum": np.array(vertex_sum),
        "momentum_sum": np.array(momentum_sum),
    }


def lddmm_hamiltonian_flow(q0: LandmarkConfig, p0: Covector | ArrayLike, cfg: IntegratorConfig | None = None) -> Trajectory:
    """Integrate q_t = K(q) p, p_t = -dH/dq with the Gaussian kernel.

    A collision, min pairwise distance below 1e-8 times the initial diameter,
    stops the run; the trajectory then records the abort.
    """
    cfg = cfg or IntegratorConfig()
    sigma, guard_distance = q0.sigma, q0.collision_guard

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        points, momenta = y
        return np.stack((gaussian_weights(points, sigma) @ momenta, -_gradient(points, momenta, sigma)))

    def guard(t: float, y: np.ndarray) -> None:
        if not np.all(np.isfinite(y)):
            raise DegenerateLandmarks("landmark state became non-finite", time=t)
        distances = pdist(y[0])
        if distances.size and not distances.min() > guard_distance:
            raise DegenerateLandmarks(
                f"landmarks collided (min distance {distances.min():.3e})", time=t, min_distance=float(distances.min())
            )

    y0 = np.stack((q0.points, _momenta(q0, p0)))
    times, samples, abort = run_fixed_step(rk4_stepper(rhs, guard), y0, cfg)
    diagnostics = _diagnostics(samples[:, 0], samples[:, 1], sigma)
    return Trajectory("lddmm", times, samples[:, 0], samples[:, 1], diagnostics, abort)


def compare_flows(q0: LandmarkConfig, p0: Covector | ArrayLike, cfg: IntegratorConfig | None = None) -> FlowComparison:
    """Run the elastic and the Gaussian flow from the same centered landmarks.

    Both flows commute with translations, so centering changes neither shape
    evolution.
    """
    centered = LandmarkConfig(q0.points - q0.points.mean(axis=0), q0.sigma)
    momenta = _momenta(q0, p0)
    elastic = integrate_hamiltonian(HamiltonianState(Polygon(centered.points, mean_zero=True), Covector(momenta)), cfg)
    lddmm = lddmm_hamiltonian_flow(centered, momenta, cfg)
    if elastic.aborted:
        logger.info("Elastic flow reached the edge guard at t=%s", elastic.abort_time)
    return FlowComparison(elastic, lddmm)
