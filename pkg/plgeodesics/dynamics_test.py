import time

import numpy as np
import pydantic
import pytest
from numpy.testing import assert_allclose

from plgeodesics.curve import Covector, Polygon, VertexField
from plgeodesics.dynamics import (
    HamiltonianState,
    IntegratorConfig,
    LagrangianState,
    ShootingConfig,
    christoffel,
    exp_map,
    geodesic_distance,
    geodesic_residual,
    integrate_hamiltonian,
    integrate_lagrangian,
    log_map,
    self_convergence,
    soliton_momentum,
    step_sizes,
    w1_inf_distance,
)
from plgeodesics.errors import DegenerateEdge, InvalidInput, NoConvergence, NotMeanZero
from plgeodesics.generators import fourier_field, gen_diamond, gen_fourier_curve, random_field, random_polygon
from plgeodesics.metric import metric, momentum

CIRCLE = np.zeros((3, 2, 2))
CIRCLE[0] = [[1.0, 0.0], [0.0, 1.0]]
HIGHER = np.array([0.0, 1.0, 1.0])[:, None, None]


def _smooth_state(rng, n, amplitude=0.15):
    curve = CIRCLE + 0.1 * rng.standard_normal((3, 2, 2)) * HIGHER
    velocity = amplitude * rng.standard_normal((3, 2, 2))
    return LagrangianState(gen_fourier_curve(curve, n), fourier_field(velocity, n))


def _diamond_start():
    c, v, _ = gen_diamond(0.0)
    return LagrangianState(c, v)


def test_step_sizes_land_on_t_end():
    steps = step_sizes(IntegratorConfig(dt=0.1, t_end=1.05))
    assert steps.size == 11
    assert steps.sum() == pytest.approx(1.05, abs=1e-15)
    assert steps[-1] == pytest.approx(0.05)
    assert step_sizes(IntegratorConfig(dt=0.1, t_end=1.0)).size == 10


@pytest.mark.parametrize("field, value", [("dt", 0.0), ("t_end", -1.0), ("sample_stride", 0), ("scheme", "euler")])
def test_integrator_config_validation(field, value):
    with pytest.raises(pydantic.ValidationError):
        IntegratorConfig(**{field: value})


def test_states_require_mean_zero():
    c = Polygon([[1.0, 0.0], [2.0, 1.0], [0.0, 1.0]])
    with pytest.raises(NotMeanZero):
        LagrangianState(c, VertexField(np.zeros((3, 2)), mean_zero=True))
    with pytest.raises(NotMeanZero):
        HamiltonianState(c, Covector(np.zeros((3, 2))))


def test_christoffel_basics(rng):
    state = _smooth_state(rng, 12)
    zero = VertexField.zeros(state.c.grid)
    assert_allclose(christoffel(state.c, zero).values, 0.0)
    base = christoffel(state.c, state.v).values
    scaled = christoffel(state.c, 2.5 * state.v).values
    assert_allclose(scaled, 2.5**2 * base, rtol=1e-12, atol=1e-14)
    assert np.abs(base.sum(axis=0)).max() <= 1e-13


def test_christoffel_on_diamond():
    c, v, a = gen_diamond(np.pi / 4)
    assert np.abs(christoffel(c, v).values - a.values).max() <= 1e-10


def test_diamond_solves_geodesic_equation_everywhere():
    for t in 2 * np.pi * np.arange(32) / 32:
        c, v, a = gen_diamond(t)
        assert geodesic_residual(c, v, a) <= 1e-10


def test_geodesic_residual(rng):
    c, v, a = gen_diamond(0.3)
    assert geodesic_residual(c, VertexField.zeros(c.grid), VertexField.zeros(c.grid)) == 0.0
    perturbation = VertexField.projected(rng.standard_normal((4, 2)) * 1e-3)
    residual = geodesic_residual(c, v, a + perturbation)
    assert residual == pytest.approx(perturbation.norm_inf(), abs=1e-12)


@pytest.mark.parametrize("t_end", [np.pi / 4, 1.0])
def test_diamond_regression(t_end):
    traj = integrate_lagrangian(_diamond_start(), IntegratorConfig(dt=1e-4, t_end=t_end, sample_stride=100000))
    c, v, _ = gen_diamond(t_end)
    assert traj.times[-1] == t_end
    assert np.abs(traj.final_positions - c.vertices).max() <= 1e-6
    assert np.abs(traj.conjugates[-1] - v.values).max() <= 1e-6


def test_diamond_run_is_fast():
    integrate_lagrangian(_diamond_start(), IntegratorConfig(dt=1e-2, t_end=0.1))
    start = time.perf_counter()
    traj = integrate_lagrangian(_diamond_start(), IntegratorConfig(dt=1e-4, t_end=1.0, sample_stride=100000))
    elapsed = time.perf_counter() - start
    assert np.abs(traj.final_positions - gen_diamond(1.0)[0].vertices).max() <= 1e-6
    assert elapsed < 1.0


def test_zero_velocity_is_stationary(rng):
    state = _smooth_state(rng, 8)
    still = LagrangianState(state.c, VertexField.zeros(state.c.grid))
    traj = integrate_lagrangian(still, IntegratorConfig(dt=0.05, t_end=0.5))
    assert len(traj) == 11
    assert_allclose(traj.positions, np.broadcast_to(state.c.vertices, traj.positions.shape))
    assert all(np.abs(alpha.values).max() == 0.0 for alpha in soliton_momentum(traj))

    ham = integrate_hamiltonian(HamiltonianState(state.c, Covector(np.zeros((8, 2)))), IntegratorConfig(dt=0.05, t_end=0.5))
    assert_allclose(ham.positions, np.broadcast_to(state.c.vertices, ham.positions.shape))


def test_sampling_keeps_stride_and_final_step(rng):
    traj = integrate_lagrangian(_smooth_state(rng, 6), IntegratorConfig(dt=0.1, t_end=1.0, sample_stride=3))
    assert_allclose(traj.times, [0.0, 0.3, 0.6, 0.9, 1.0])
    assert traj.positions.shape == (5, 6, 2)
    assert set(traj.diagnostics) == {"energy", "length", "min_edge", "vertex_sum", "momentum_sum"}
    assert traj.diagnostics["momentum_sum"].shape == (5, 2)
    assert isinstance(traj.state(2), LagrangianState)
    assert len(traj.states) == 5


@pytest.mark.parametrize("n", [4, 16, 32])
def test_conservation(rng, n):
    cfg = IntegratorConfig(dt=1e-3, t_end=1.0, sample_stride=10)
    state = _smooth_state(rng, n)
    lagrangian = integrate_lagrangian(state, cfg)
    assert not lagrangian.aborted
    energy = lagrangian.diagnostics["energy"]
    assert np.abs(energy - energy[0]).max() <= 1e-8 * (1 + energy[0])
    assert lagrangian.diagnostics["vertex_sum"].max() <= 1e-9

    alpha = Covector(momentum(state.c, state.v).values + np.array([0.2, -0.1]))
    hamiltonian = integrate_hamiltonian(HamiltonianState(state.c, alpha), cfg)
    assert not hamiltonian.aborted
    h_energy = hamiltonian.diagnostics["energy"]
    assert np.abs(h_energy - h_energy[0]).max() <= 1e-8 * (1 + h_energy[0])
    assert hamiltonian.diagnostics["vertex_sum"].max() <= 1e-9
    drift = hamiltonian.diagnostics["momentum_sum"] - alpha.total()
    assert np.abs(drift).max() <= 1e-9


def test_lagrangian_and_hamiltonian_agree(rng):
    cfg = IntegratorConfig(dt=1e-3, t_end=1.0, sample_stride=50)
    for _ in range(20):
        n = int(rng.integers(3, 17))
        state = _smooth_state(rng, n)
        lagrangian = integrate_lagrangian(state, cfg)
        hamiltonian = integrate_hamiltonian(HamiltonianState(state.c, momentum(state.c, state.v)), cfg)
        assert_allclose(lagrangian.times, hamiltonian.times)
        assert np.abs(lagrangian.positions - hamiltonian.positions).max() <= 1e-6

        for alpha_l, alpha_h in zip(soliton_momentum(lagrangian), hamiltonian.conjugates):
            assert np.abs(alpha_l.values - Covector(alpha_h).restricted().values).max() <= 1e-6


def test_hamiltonian_ignores_momentum_mean(rng):
    state = _smooth_state(rng, 10)
    alpha = Covector(momentum(state.c, state.v).values + np.array([0.3, -0.2]))
    cfg = IntegratorConfig(dt=1e-2, t_end=1.0)
    full = integrate_hamiltonian(HamiltonianState(state.c, alpha), cfg)
    restricted = integrate_hamiltonian(HamiltonianState(state.c, alpha.restricted()), cfg)
    assert np.abs(full.positions - restricted.positions).max() <= 1e-12
    assert_allclose(full.diagnostics["momentum_sum"], np.broadcast_to(alpha.total(), (len(full), 2)), atol=1e-9)


def test_soliton_momentum_on_diamond():
    traj = integrate_lagrangian(_diamond_start(), IntegratorConfig(dt=1e-3, t_end=1.0, sample_stride=50))
    for alpha in soliton_momentum(traj):
        assert np.abs(alpha.total()).max() <= 1e-12


def test_exp_map(rng):
    c, v, _ = gen_diamond(0.0)
    assert_allclose(exp_map(c, VertexField.zeros(c.grid)).vertices, c.vertices)
    assert np.abs(exp_map(c, v).vertices - gen_diamond(1.0)[0].vertices).max() <= 1e-6


def test_geodesic_homogeneity(rng):
    state = _smooth_state(rng, 12)
    half = integrate_lagrangian(
        LagrangianState(state.c, 2.0 * state.v), IntegratorConfig(dt=1e-3, t_end=0.5, sample_stride=1000)
    )
    full = integrate_lagrangian(state, IntegratorConfig(dt=1e-3, t_end=1.0, sample_stride=1000))
    assert np.abs(half.final_positions - full.final_positions).max() <= 1e-8

    scaled = exp_map(state.c, 0.4 * state.v, IntegratorConfig(dt=1e-3))
    partial = integrate_lagrangian(state, IntegratorConfig(dt=1e-3, t_end=0.4, sample_stride=1000))
    assert np.abs(scaled.vertices - partial.final_positions).max() <= 1e-8


def test_trajectory_equivariance(rng):
    state = _smooth_state(rng, 10)
    cfg = IntegratorConfig(dt=1e-2, t_end=1.0, sample_stride=10)
    base = integrate_lagrangian(state, cfg)

    factor = 2.5
    scaled = integrate_lagrangian(
        LagrangianState(Polygon(factor * state.c.vertices, mean_zero=True), factor * state.v), cfg
    )
    assert np.abs(scaled.positions - factor * base.positions).max() <= 1e-9 * factor

    angle = 0.7
    rotation = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
    rotated = integrate_lagrangian(
        LagrangianState(
            Polygon(state.c.vertices @ rotation.T, mean_zero=True), VertexField(state.v.values @ rotation.T, mean_zero=True)
        ),
        cfg,
    )
    assert np.abs(rotated.positions - base.positions @ rotation.T).max() <= 1e-9


def _shrinking_square(square):
    push = np.zeros((4, 2))
    push[0] = [-1.0, 0.0]
    return LagrangianState(square, VertexField.projected(push))


def test_shrinking_edge_is_recorded(square):
    traj = integrate_lagrangian(_shrinking_square(square), IntegratorConfig(dt=1e-3, t_end=0.2, sample_stride=20))
    min_edge = traj.diagnostics["min_edge"]
    assert np.all(np.diff(min_edge) < 0)
    assert min_edge[-1] < min_edge[0]


def test_edge_guard_aborts_and_keeps_last_state(square):
    cfg = IntegratorConfig(dt=1e-3, t_end=1.0, sample_stride=100, edge_guard=0.22)
    traj = integrate_lagrangian(_shrinking_square(square), cfg)
    assert traj.aborted
    assert 0.0 < traj.abort_time < 1.0
    assert "guard" in traj.abort_reason
    assert traj.times[-1] < traj.abort_time
    assert np.all(np.diff(traj.times) > 0)
    last = traj.diagnostics
    assert last["min_edge"][-1] > 0.22 * last["length"][-1]
    with pytest.raises(DegenerateEdge) as info:
        traj.raise_if_aborted()
    assert info.value.time == traj.abort_time
    with pytest.raises(DegenerateEdge):
        exp_map(square, _shrinking_square(square).v, cfg)


@pytest.mark.parametrize("hamiltonian_form", [False, True])
def test_guard_above_initial_edges_returns_start_state(square, hamiltonian_form):
    cfg = IntegratorConfig(dt=1e-3, t_end=1.0, edge_guard=0.3)
    state = _shrinking_square(square)
    if hamiltonian_form:
        traj = integrate_hamiltonian(HamiltonianState(square, momentum(square, state.v)), cfg)
    else:
        traj = integrate_lagrangian(state, cfg)
    assert traj.aborted
    assert traj.abort_time == 0.0
    assert len(traj) == 1
    assert_allclose(traj.positions[0], square.vertices)
    assert traj.diagnostics["min_edge"][0] == 2.0
    assert traj.state(0).c.total_length == 8.0


SHOOT = ShootingConfig(integrator=IntegratorConfig(dt=1e-2))


def test_log_map_of_identical_polygons(rng):
    c = random_polygon(rng, 6)
    result = log_map(c, c, SHOOT)
    assert result.iterations == 0
    assert_allclose(result.velocity.values, 0.0)
    assert geodesic_distance(c, c, SHOOT) == 0.0


def test_exp_log_round_trip(rng):
    for _ in range(20):
        n = int(rng.integers(4, 7))
        c = random_polygon(rng, n)
        h = random_field(rng, n)
        h = h * (float(rng.uniform(0.05, 0.2)) / np.sqrt(metric(c, h, h)))
        target = exp_map(c, h, SHOOT.integrator)
        result = log_map(c, target, SHOOT)
        assert result.iterations <= 25
        assert result.residual <= SHOOT.tol
        assert np.abs(exp_map(c, result.velocity, SHOOT.integrator).vertices - target.vertices).max() <= 1e-8
        assert np.abs(result.velocity.values - h.values).max() <= 1e-6
        assert list(result.history) == sorted(result.history, reverse=True)


def test_geodesic_distance_is_symmetric(rng):
    for _ in range(3):
        c0 = random_polygon(rng, 5)
        h = random_field(rng, 5)
        c1 = exp_map(c0, h * (0.1 / np.sqrt(metric(c0, h, h))), SHOOT.integrator)
        forward = geodesic_distance(c0, c1, SHOOT)
        assert forward == pytest.approx(0.1, abs=1e-6)
        assert abs(forward - geodesic_distance(c1, c0, SHOOT)) <= 1e-6


def test_geodesic_distance_is_scale_invariant(rng):
    c = random_polygon(rng, 5)
    scale = 1.2
    first = geodesic_distance(c, Polygon(scale * c.vertices, mean_zero=True), SHOOT)
    second = geodesic_distance(
        Polygon(scale * c.vertices, mean_zero=True), Polygon(scale**2 * c.vertices, mean_zero=True), SHOOT
    )
    assert np.isfinite(first) and first > 0
    assert first == pytest.approx(second, abs=1e-6)


def test_log_map_gives_up(rng):
    c = random_polygon(rng, 5)
    h = random_field(rng, 5)
    target = exp_map(c, h * (0.3 / np.sqrt(metric(c, h, h))), SHOOT.integrator)
    with pytest.raises(NoConvergence) as info:
        log_map(c, target, ShootingConfig(max_iter=1, tol=1e-15, integrator=SHOOT.integrator))
    assert info.value.iterations == 1
    assert info.value.residual > 1e-15


def test_w1_inf_distance():
    coarse = np.array([[0.0, 0.0], [2.0, 0.0], [1.0, 2.0]])
    refined = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [1.5, 1.0], [1.0, 2.0], [0.5, 1.0]])
    assert w1_inf_distance(coarse, refined) == pytest.approx(0.0, abs=1e-14)
    bumped = refined.copy()
    bumped[1, 1] = 0.1
    assert w1_inf_distance(coarse, bumped) > 0.05
    with pytest.raises(InvalidInput):
        w1_inf_distance(coarse, refined[:5])


def test_self_convergence():
    curve = [[[1.0, 0.0], [0.0, 1.0]], [[0.1, 0.05], [0.0, -0.1]]]
    velocity = [[[0.2, 0.0], [0.0, -0.1]], [[0.0, 0.15], [0.1, 0.0]], [[0.05, 0.0], [0.0, 0.05]]]
    study = self_convergence(curve, velocity, (16, 32, 64, 128), IntegratorConfig(dt=1e-2))
    assert len(study.distances) == 3
    assert all(order >= 0.9 for order in study.orders)
