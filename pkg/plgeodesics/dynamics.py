"""Geodesic flow on polygons in its Lagrangian and Hamiltonian forms.

Both integrators are classical fixed-step RK4. They work on raw numpy arrays
of shape (2, n, d), holding positions and velocities or momenta, and only wrap
the stored samples into typed values. When an edge shrinks below the guard
the run stops and the trajectory keeps the last accepted state together with
the abort.
"""
from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from typing import Literal

import numpy as np
from numba import njit
from numpy.typing import ArrayLike
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt
from scipy import linalg

from .config import (
    DEFAULT_DT,
    DEFAULT_EDGE_GUARD,
    DEFAULT_T_END,
    SHOOTING_FD_STEP,
    SHOOTING_MAX_ITER,
    SHOOTING_TOL,
)
from .curve import Covector, Polygon, VertexField, check_grid, require_zero_sum
from .errors import DegenerateEdge, InvalidInput, NoConvergence, NotMeanZero, NumericalAbort
from .generators import fourier_field, gen_fourier_curve
from .metric import (
    extended_weights,
    hamiltonian,
    hamiltonian_edge_gradient,
    metric,
    momentum,
    vertex_gradient,
)

logger = logging.getLogger(__name__)

TrajectoryKind = Literal["lagrangian", "hamiltonian", "lddmm"]
RightHandSide = Callable[[float, np.ndarray], np.ndarray]
Guard = Callable[[float, np.ndarray], None]
Stepper = Callable[[float, np.ndarray, float], np.ndarray]


class IntegratorConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    scheme: Literal["rk4-fixed"] = "rk4-fixed"
    dt: PositiveFloat = DEFAULT_DT
    t_end: PositiveFloat = DEFAULT_T_END
    sample_stride: PositiveInt = 1
    edge_guard: PositiveFloat = DEFAULT_EDGE_GUARD


class ShootingConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    max_iter: PositiveInt = SHOOTING_MAX_ITER
    tol: PositiveFloat = SHOOTING_TOL
    fd_step: PositiveFloat = SHOOTING_FD_STEP
    integrator: IntegratorConfig = Field(default_factory=IntegratorConfig)


@dataclass(frozen=True, eq=False)
class LagrangianState:
    c: Polygon
    v: VertexField

    def __post_init__(self):
        check_grid(self.c.grid, self.v.grid)
        if not (self.c.mean_zero and self.v.mean_zero):
            raise NotMeanZero("a Lagrangian state needs a mean-zero polygon and velocity")


@dataclass(frozen=True, eq=False)
class HamiltonianState:
    """Polygon with an unconstrained momentum covector."""

    c: Polygon
    a: Covector

    def __post_init__(self):
        check_grid(self.c.grid, self.a.grid)
        if not self.c.mean_zero:
            raise NotMeanZero("a Hamiltonian state needs a mean-zero polygon")


GeodesicState = LagrangianState | HamiltonianState


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Stored samples of an integration run.

    ``positions`` and ``conjugates`` have shape (samples, n, d); conjugates are
    velocities for Lagrangian runs and momenta otherwise. ``diagnostics`` maps
    names to per-sample arrays.
    """

    kind: TrajectoryKind
    times: np.ndarray
    positions: np.ndarray
    conjugates: np.ndarray
    diagnostics: dict[str, np.ndarray]
    abort: NumericalAbort | None = None

    def __post_init__(self):
        if self.times.ndim != 1 or self.times.size == 0:
            raise InvalidInput("a trajectory needs at least one sample time")
        if np.any(np.diff(self.times) <= 0):
            raise InvalidInput("trajectory times must be strictly increasing")
        if self.positions.shape != self.conjugates.shape or self.positions.shape[0] != self.times.size:
            raise InvalidInput("trajectory arrays disagree on the number of samples")

    def __len__(self) -> int:
        return self.times.size

    @property
    def aborted(self) -> bool:
        return self.abort is not None

    @property
    def abort_reason(self) -> str | None:
        return None if self.abort is None else str(self.abort)

    @property
    def abort_time(self) -> float | None:
        return None if self.abort is None else getattr(self.abort, "time", None)

    def raise_if_aborted(self) -> None:
        if self.abort is not None:
            raise self.abort

    def state(self, index: int) -> GeodesicState:
        if self.kind == "lddmm":
            raise InvalidInput("landmark trajectories carry no polygon states")
        c = _sample_polygon(self.positions[index], mean_zero=True)
        if self.kind == "lagrangian":
            return LagrangianState(c, VertexField(self.conjugates[index], mean_zero=True))
        return HamiltonianState(c, Covector(self.conjugates[index]))

    @property
    def states(self) -> list[GeodesicState]:
        return [self.state(i) for i in range(len(self))]

    @property
    def final_positions(self) -> np.ndarray:
        return self.positions[-1]


@dataclass(frozen=True)
class ShootingResult:
    velocity: VertexField
    iterations: int
    residual: float
    history: tuple[float, ...]


@dataclass(frozen=True)
class ConvergenceStudy:
    ns: tuple[int, ...]
    distances: tuple[float, ...]
    orders: tuple[float, ...]


def step_sizes(cfg: IntegratorConfig) -> np.ndarray:
    """Fixed steps of size dt, the last one shortened to land exactly on t_end."""
    count = max(1, math.ceil(cfg.t_end / cfg.dt - 1e-9))
    steps = np.full(count, cfg.dt)
    steps[-1] = cfg.t_end - cfg.dt * (count - 1)
    return steps


def rk4_step(rhs: RightHandSide, t: float, y: np.ndarray, h: float) -> np.ndarray:
    k1 = rhs(t, y)
    k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = rhs(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_stepper(rhs: RightHandSide, guard: Guard) -> Stepper:
    """Classical RK4 step followed by the guard on the new state."""

    def step(t: float, y: np.ndarray, h: float) -> np.ndarray:
        candidate = rk4_step(rhs, t, y, h)
        guard(t + h, candidate)
        return candidate

    return step


def run_fixed_step(
    step: Stepper, y0: np.ndarray, cfg: IntegratorConfig
) -> tuple[np.ndarray, np.ndarray, NumericalAbort | None]:
    """Advance y0 with ``step`` and return (sample times, samples, abort).

    Samples are taken at t = 0, every ``sample_stride`` steps and at the final
    step. On abort the last accepted state is appended if it was not sampled.
    """
    steps = step_sizes(cfg)
    clock = np.concatenate(([0.0], np.cumsum(steps)))
    clock[-1] = cfg.t_end
    times, samples = [0.0], [y0]
    y, abort, accepted = y0, None, 0
    for k in range(1, steps.size + 1):
        try:
            candidate = step(clock[k - 1], y, steps[k - 1])
        except NumericalAbort as exc:
            abort = exc
            logger.warning("Integration stopped at step %d: %s", k, exc)
            break
        y, accepted = candidate, k
        if k % cfg.sample_stride == 0 or k == steps.size:
            times.append(float(clock[k]))
            samples.append(y)
    if abort is not None and samples[-1] is not y:
        times.append(float(clock[accepted]))
        samples.append(y)
    return np.array(times), np.stack(samples), abort


def _differences(values: np.ndarray) -> np.ndarray:
    return np.roll(values, -1, axis=0) - values


def _lengths(edges: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("ij,ij->i", edges, edges))


def _sample_polygon(vertices: np.ndarray, mean_zero: bool = False) -> Polygon:
    # stored samples already cleared the integrator's own guard
    return Polygon(vertices, mean_zero=mean_zero, edge_guard=0.0)


def _degenerate(shortest: float, limit: float, t: float) -> DegenerateEdge:
    if not math.isfinite(shortest):
        return DegenerateEdge("state became non-finite", time=t)
    return DegenerateEdge(f"minimum edge length {shortest:.3e} crossed the guard {limit:.3e}", time=t, min_edge=shortest)


def _check_edges(lengths: np.ndarray, t: float, factor: float) -> None:
    limit = factor * max(1.0, float(lengths.sum()))
    shortest = float(lengths.min())
    if not shortest > limit:
        raise _degenerate(shortest, limit, t)


@njit(cache=True)
def _geodesic_field(y):
    """Right-hand side (velocity, Gamma_c(u,u)) at y = (c, u), the shortest edge and the length.

    Gamma_c(u,u) = G_c(c,u) u - G_c(u,u) c / 2 + D_s^-1 pi0 (<D_s c, D_s u> D_s u - |D_s u|^2 D_s c / 2)
    """
    vertices = y[0]
    velocity = y[1]
    n, d = vertices.shape
    edges = np.empty((n, d))
    du = np.empty((n, d))
    lengths = np.empty(n)
    cross = np.empty(n)
    squared = np.empty(n)
    for i in range(n):
        j = (i + 1) % n
        norm, dot, sq = 0.0, 0.0, 0.0
        for k in range(d):
            e = vertices[j, k] - vertices[i, k]
            w = velocity[j, k] - velocity[i, k]
            edges[i, k] = e
            du[i, k] = w
            norm += e * e
            dot += e * w
            sq += w * w
        lengths[i] = np.sqrt(norm)
        cross[i] = dot
        squared[i] = sq
    total = lengths.sum()
    g_cu = np.sum(cross / lengths) / total
    g_uu = np.sum(squared / lengths) / total

    increments = np.empty((n, d))
    drift = np.zeros(d)
    for i in range(n):
        scale = 1.0 / (lengths[i] * lengths[i])
        for k in range(d):
            increments[i, k] = (cross[i] * du[i, k] - 0.5 * squared[i] * edges[i, k]) * scale
            drift[k] += increments[i, k]
    partial = np.zeros((n, d))
    mean = np.zeros(d)
    for i in range(1, n):
        for k in range(d):
            partial[i, k] = partial[i - 1, k] + increments[i - 1, k] - lengths[i - 1] * drift[k] / total
            mean[k] += partial[i, k]

    field = np.empty((2, n, d))
    for i in range(n):
        for k in range(d):
            field[0, i, k] = velocity[i, k]
            field[1, i, k] = g_cu * velocity[i, k] - 0.5 * g_uu * vertices[i, k] + partial[i, k] - mean[k] / n
    return field, lengths.min(), total


@njit(cache=True)
def _edge_extent(vertices):
    n, d = vertices.shape
    shortest, total = np.inf, 0.0
    for i in range(n):
        j = (i + 1) % n
        norm = 0.0
        for k in range(d):
            e = vertices[j, k] - vertices[i, k]
            norm += e * e
        length = np.sqrt(norm)
        total += length
        shortest = min(shortest, length)
    return shortest, total


@njit(cache=True)
def _geodesic_rk4_step(y, h, factor):
    """One RK4 step of the geodesic flow with the edge guard checked at every stage.

    Returns (new state, failed stage, shortest edge, guard). Stage 0 means the
    step went through; 1-4 name the RK4 stage and 5 the new state.
    """
    k1, shortest, total = _geodesic_field(y)
    limit = factor * max(1.0, total)
    if not shortest > limit:
        return y, 1, shortest, limit
    k2, shortest, total = _geodesic_field(y + 0.5 * h * k1)
    limit = factor * max(1.0, total)
    if not shortest > limit:
        return y, 2, shortest, limit
    k3, shortest, total = _geodesic_field(y + 0.5 * h * k2)
    limit = factor * max(1.0, total)
    if not shortest > limit:
        return y, 3, shortest, limit
    k4, shortest, total = _geodesic_field(y + h * k3)
    limit = factor * max(1.0, total)
    if not shortest > limit:
        return y, 4, shortest, limit
    candidate = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(candidate)):
        return y, 5, np.nan, limit
    shortest, total = _edge_extent(candidate[0])
    limit = factor * max(1.0, total)
    if not shortest > limit:
        return y, 5, shortest, limit
    return candidate, 0, shortest, limit


_STAGE_OFFSETS = (0.0, 0.5, 0.5, 1.0, 1.0)


def _geodesic_stepper(edge_guard: float) -> Stepper:
    def step(t: float, y: np.ndarray, h: float) -> np.ndarray:
        candidate, stage, shortest, limit = _geodesic_rk4_step(y, h, edge_guard)
        if stage:
            raise _degenerate(float(shortest), float(limit), t + _STAGE_OFFSETS[stage - 1] * h)
        return candidate

    return step


def _require_mean_zero(*items: Polygon | VertexField) -> None:
    for item in items:
        values = item.vertices if isinstance(item, Polygon) else item.values
        require_zero_sum(values, NotMeanZero, "expected mean-zero vertex data")


def christoffel(c: Polygon, h: VertexField) -> VertexField:
    """Acceleration of the geodesic through c with velocity h."""
    check_grid(c.grid, h.grid)
    _require_mean_zero(c, h)
    field, _, _ = _geodesic_field(np.stack((c.vertices, h.values)))
    return VertexField(field[1], mean_zero=True)


def geodesic_residual(c: Polygon, v: VertexField, a: VertexField) -> float:
    """||a - Gamma_c(v,v)||_inf."""
    check_grid(c.grid, a.grid)
    return float(np.abs(a.values - christoffel(c, v).values).max())


def _hamiltonian_rhs(edge_guard: float) -> RightHandSide:
    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        vertices, alpha = y
        edges = _differences(vertices)
        lengths = _lengths(edges)
        _check_edges(lengths, t, edge_guard)
        _, edge_gradient = hamiltonian_edge_gradient(lengths, alpha)
        velocity = extended_weights(lengths) @ alpha
        return np.stack((velocity, -vertex_gradient(edges, lengths, edge_gradient)))

    return rhs


def _edge_guard(edge_guard: float) -> Guard:
    def guard(t: float, y: np.ndarray) -> None:
        if not np.all(np.isfinite(y)):
            raise DegenerateEdge("state became non-finite", time=t)
        _check_edges(_lengths(_differences(y[0])), t, edge_guard)

    return guard


def _polygon_diagnostics(positions: np.ndarray, conjugates: np.ndarray, lagrangian: bool) -> dict[str, np.ndarray]:
    energy, length, min_edge, vertex_sum, momentum_sum = [], [], [], [], []
    for vertices, conjugate in zip(positions, conjugates):
        c = _sample_polygon(vertices)
        if lagrangian:
            v = VertexField(conjugate)
            energy.append(metric(c, v, v))
            momentum_sum.append(momentum(c, v).total())
        else:
            a = Covector(conjugate)
            energy.append(2.0 * hamiltonian(c, a))
            momentum_sum.append(a.total())
        length.append(c.total_length)
        min_edge.append(c.min_edge)
        vertex_sum.append(float(np.abs(vertices.sum(axis=0)).max()))
    return {
        "energy": np.array(energy),
        "length": np.array(length),
        "min_edge": np.array(min_edge),
        "vertex_sum": np.array(vertex_sum),
        "momentum_sum": np.array(momentum_sum),
    }


def integrate_lagrangian(s0: LagrangianState, cfg: IntegratorConfig | None = None) -> Trajectory:
    cfg = cfg or IntegratorConfig()
    if not isinstance(s0, LagrangianState):
        raise InvalidInput("integrate_lagrangian needs a Lagrangian state")
    y0 = np.stack((s0.c.vertices, s0.v.values))
    times, samples, abort = run_fixed_step(_geodesic_stepper(cfg.edge_guard), y0, cfg)
    diagnostics = _polygon_diagnostics(samples[:, 0], samples[:, 1], lagrangian=True)
    return Trajectory("lagrangian", times, samples[:, 0], samples[:, 1], diagnostics, abort)


def integrate_hamiltonian(s0: HamiltonianState, cfg: IntegratorConfig | None = None) -> Trajectory:
    """Integrate c_t = K_c alpha, alpha_t = -dH/dc."""
    cfg = cfg or IntegratorConfig()
    if not isinstance(s0, HamiltonianState):
        raise InvalidInput("integrate_hamiltonian needs a Hamiltonian state")
    y0 = np.stack((s0.c.vertices, s0.a.values))
    stepper = rk4_stepper(_hamiltonian_rhs(cfg.edge_guard), _edge_guard(cfg.edge_guard))
    times, samples, abort = run_fixed_step(stepper, y0, cfg)
    diagnostics = _polygon_diagnostics(samples[:, 0], samples[:, 1], lagrangian=False)
    return Trajectory("hamiltonian", times, samples[:, 0], samples[:, 1], diagnostics, abort)


def _endpoint_config(cfg: IntegratorConfig | None) -> IntegratorConfig:
    cfg = cfg or IntegratorConfig()
    count = step_sizes(cfg.model_copy(update={"t_end": 1.0})).size
    return cfg.model_copy(update={"t_end": 1.0, "sample_stride": count})


def exp_map(c: Polygon, h: VertexField, cfg: IntegratorConfig | None = None) -> Polygon:
    """Endpoint at t = 1 of the geodesic from c with initial velocity h."""
    _require_mean_zero(c, h)
    run = _endpoint_config(cfg)
    state = LagrangianState(Polygon(c.vertices, mean_zero=True, edge_guard=run.edge_guard), VertexField(h.values, mean_zero=True))
    trajectory = integrate_lagrangian(state, run)
    trajectory.raise_if_aborted()
    return Polygon(trajectory.final_positions, mean_zero=True, edge_guard=run.edge_guard)


def log_map(c0: Polygon, c1: Polygon, cfg: ShootingConfig | None = None) -> ShootingResult:
    """Initial velocity h with exp_map(c0, h) = c1, by damped Gauss-Newton shooting.

    Unknowns live in an orthonormal basis of the mean-zero subspace; the
    Jacobian is assembled from forward differences along that basis.

    Raises:
        NoConvergence: if the residual does not reach ``tol`` within
            ``max_iter`` iterations or a line search cannot decrease it.
        DegenerateEdge: if the initial shot or a Jacobian shot collapses an edge.
    """
    cfg = cfg or ShootingConfig()
    check_grid(c0.grid, c1.grid)
    _require_mean_zero(c0, c1)
    n, d = c0.n, c0.d
    basis = linalg.null_space(np.ones((1, n)))
    target = c1.vertices

    def shoot(coords: np.ndarray) -> np.ndarray:
        h = VertexField(basis @ coords, mean_zero=True)
        return exp_map(c0, h, cfg.integrator).vertices - target

    coords = basis.T @ (target - c0.vertices)
    mismatch = shoot(coords)
    residual = float(np.abs(mismatch).max())
    history = [residual]
    iteration = 0
    while residual > cfg.tol:
        if iteration >= cfg.max_iter:
            raise NoConvergence("shooting did not converge", iteration, residual)
        iteration += 1
        reduced = (basis.T @ mismatch).ravel()
        step = cfg.fd_step * (1.0 + float(np.linalg.norm(coords)))
        jacobian = np.empty((reduced.size, reduced.size))
        for j in range(reduced.size):
            shifted = coords.copy().ravel()
            shifted[j] += step
            jacobian[:, j] = ((basis.T @ shoot(shifted.reshape(n - 1, d))).ravel() - reduced) / step
        direction = linalg.lstsq(jacobian, -reduced)[0].reshape(n - 1, d)

        damping = 1.0
        while True:
            trial = coords + damping * direction
            try:
                trial_mismatch = shoot(trial)
            except DegenerateEdge:
                trial_mismatch = None
            if trial_mismatch is not None and np.abs(trial_mismatch).max() < residual:
                break
            damping *= 0.5
            if damping < 2.0**-20:
                raise NoConvergence("line search failed", iteration, residual)
        coords, mismatch = trial, trial_mismatch
        residual = float(np.abs(mismatch).max())
        history.append(residual)
        logger.debug("Shooting iteration %d: residual %.3e (damping %.3g)", iteration, residual, damping)

    return ShootingResult(VertexField(basis @ coords, mean_zero=True), iteration, residual, tuple(history))


def geodesic_distance(c0: Polygon, c1: Polygon, cfg: ShootingConfig | None = None) -> float:
    h = log_map(c0, c1, cfg).velocity
    return math.sqrt(max(metric(c0, h, h), 0.0))


def soliton_momentum(traj: Trajectory) -> list[Covector]:
    """Momentum covector of every stored sample of a Lagrangian trajectory."""
    if traj.kind != "lagrangian":
        raise InvalidInput("soliton momenta are read off Lagrangian trajectories")
    return [
        momentum(_sample_polygon(c), VertexField(v))
        for c, v in zip(traj.positions, traj.conjugates)
    ]


def w1_inf_distance(coarse: ArrayLike, fine: ArrayLike) -> float:
    """Discrete W^{1,inf} distance between polygons sampled at n and 2n grid points.

    Vertex values are compared at the shared parameters; slopes per unit
    parameter of each fine edge are compared with the coarse edge containing it.
    """
    coarse = np.asarray(coarse, dtype=float)
    fine = np.asarray(fine, dtype=float)
    n = coarse.shape[0]
    if fine.shape != (2 * n, coarse.shape[1]):
        raise InvalidInput(f"fine polygon must have {2 * n} vertices, got {fine.shape[0]}")
    values = np.abs(fine[::2] - coarse).max()
    coarse_slopes = _differences(coarse) / (2 * math.pi / n)
    fine_slopes = _differences(fine) / (math.pi / n)
    slopes = np.abs(fine_slopes - np.repeat(coarse_slopes, 2, axis=0)).max()
    return float(values + slopes)


def self_convergence(
    curve_coefficients: ArrayLike,
    velocity_coefficients: ArrayLike,
    ns: Sequence[int],
    cfg: IntegratorConfig | None = None,
) -> ConvergenceStudy:
    """Integrate a smooth Fourier curve and velocity at doubling resolutions.

    Returns the distances between consecutive t = 1 endpoints and the
    empirical orders log2(d_k / d_{k+1}).
    """
    ns = tuple(int(n) for n in ns)
    if len(ns) < 2 or any(b != 2 * a for a, b in zip(ns, ns[1:])):
        raise InvalidInput(f"resolutions must double at each step, got {ns}")
    endpoints = []
    for n in ns:
        c = gen_fourier_curve(curve_coefficients, n)
        h = fourier_field(velocity_coefficients, n)
        endpoints.append(exp_map(c, h, cfg).vertices)
        logger.info("Self-convergence: integrated n=%d", n)
    distances = tuple(w1_inf_distance(a, b) for a, b in zip(endpoints, endpoints[1:]))
    orders = tuple(math.log2(a / b) for a, b in zip(distances, distances[1:]))
    return ConvergenceStudy(ns, distances, orders)
