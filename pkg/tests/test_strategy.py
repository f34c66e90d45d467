import numpy as np
import pytest

from isaacslab import (ConstantSource, GridError, RandomSource, ScheduleSource, SimpleMarkovStrategy, SpatialGrid,
                       TimeGrid, counter_action, make_model, solve_lower_isaacs, strategy_action,
                       synthesize_markov_counter_strategy, synthesize_markov_strategy)
from isaacslab.strategy import counter_response_source, hamiltonian_feedback_source

from conftest import GRID5, drift_game, sign_game


def test_time_grid():
    pi = TimeGrid.uniform(0.0, 1.0, 4)
    assert pi.mesh == 0.25 and pi.n == 4
    assert pi.interval(0.25) == 1 and pi.interval(0.2500001) == 2 and pi.interval(1.0) == 4
    with pytest.raises(GridError):
        pi.interval(0.0)
    with pytest.raises(GridError):
        TimeGrid([0.0, 0.5, 0.5, 1.0])
    fine = pi.refine(2)
    assert fine.n == 8 and np.allclose(fine.times[::2], pi.times)


def test_u_independent_model_all_zero():
    m = make_model("v1", "1", "sin(x1)", GRID5, GRID5)
    vf = solve_lower_isaacs(m, SpatialGrid.uniform(-3, 3, 0.125), align=4)
    alpha = synthesize_markov_strategy(vf, TimeGrid.uniform(0, 1, 4))
    assert np.all(alpha.tables == 0)


def test_v_independent_model_all_zero():
    m = make_model("u1", "1", "sin(x1)", GRID5, GRID5)
    vf = solve_lower_isaacs(m, SpatialGrid.uniform(-3, 3, 0.125), align=4)
    gamma = synthesize_markov_counter_strategy(vf, TimeGrid.uniform(0, 1, 4))
    assert np.all(gamma.tables == 0)


def test_drift_game_plays_plus_one_inside(drift_vf):
    alpha = synthesize_markov_strategy(drift_vf, TimeGrid.uniform(0, 1, 8))
    x = drift_vf.spatial_grid.nodes()[:, 0]
    inner = np.abs(x) <= 3
    assert np.all(drift_vf.model.U.points[alpha.tables[:, inner], 0] == 1.0)


def test_sign_game_tables():
    m = sign_game(sigma="1", g="x1")
    vf = solve_lower_isaacs(m, SpatialGrid.uniform(-4, 4, 0.125), align=2)
    pi = TimeGrid.uniform(0, 1, 2)
    alpha = synthesize_markov_strategy(vf, pi)
    gamma = synthesize_markov_counter_strategy(vf, pi)
    x = vf.spatial_grid.nodes()[:, 0]
    node = int(np.argmin(np.abs(x)))
    p, _ = vf.derivatives(0.0, [[0.0]])
    assert p[0, 0] > 0
    # both u give min_v = -|p|: tie, lowest index
    assert alpha.tables[0, node] == 0
    assert m.V.points[gamma.tables[0, node, 1], 0] == -1.0
    assert m.V.points[gamma.tables[0, node, 0], 0] == 1.0


def test_cancellation_counter_is_leftmost(cancel_vf):
    gamma = synthesize_markov_counter_strategy(cancel_vf, TimeGrid.uniform(0, 1, 4))
    x = cancel_vf.spatial_grid.nodes()[:, 0]
    p, _ = cancel_vf.derivative_tables(0)
    pos = (p[:, 0] > 1e-6) & (np.abs(x) < 3)
    assert np.all(gamma.tables[0][pos] == 0)


def test_strategy_action_piecewise_constant(cancel_vf):
    pi = TimeGrid.uniform(0, 1, 4)
    alpha = synthesize_markov_strategy(cancel_vf, pi)
    a1 = strategy_action(alpha, 0.26, [0.4])
    a2 = strategy_action(alpha, 0.5, [0.4])
    assert np.array_equal(a1, a2)
    assert np.array_equal(strategy_action(alpha, 0.25, [0.4]), alpha.model.U.points[alpha.tables[0, alpha.spatial_grid.nearest_index(np.array([[0.4]]))[0]]])
    with pytest.raises(GridError):
        strategy_action(alpha, 0.0, [0.4])


def test_counter_action_tracks_u(cancel_vf):
    gamma = synthesize_markov_counter_strategy(cancel_vf, TimeGrid.uniform(0, 1, 4))
    m = gamma.model
    for u in m.U.points:
        assert np.array_equal(counter_action(gamma, 0.3, [0.5], u), counter_action(gamma, 0.45, [0.5], u))
    # off-grid u projects to the nearest grid point
    assert np.array_equal(counter_action(gamma, 0.3, [0.5], [0.45]), counter_action(gamma, 0.3, [0.5], [0.5]))


def test_refinement_stability(cancel_vf):
    a4 = synthesize_markov_strategy(cancel_vf, TimeGrid.uniform(0, 1, 4))
    a8 = synthesize_markov_strategy(cancel_vf, TimeGrid.uniform(0, 1, 8))
    assert np.array_equal(a4.tables, a8.tables[::2])


def test_scaling_invariance(cancel_model):
    grid = SpatialGrid.uniform(-4, 4, 0.125)
    vf = solve_lower_isaacs(cancel_model, grid, align=4)
    pi = TimeGrid.uniform(0, 1, 4)
    base = synthesize_markov_strategy(vf, pi)
    base_c = synthesize_markov_counter_strategy(vf, pi)
    for lam in (0.25, 4.0, 1024.0):
        scaled = type(vf)(vf.spatial_grid, vf.times, lam * vf.values, vf.model)
        assert np.array_equal(synthesize_markov_strategy(scaled, pi).tables, base.tables)
        assert np.array_equal(synthesize_markov_counter_strategy(scaled, pi).tables, base_c.tables)


def test_tables_total_and_csv(tmp_path, cancel_vf):
    pi = TimeGrid.uniform(0, 1, 2)
    alpha = synthesize_markov_strategy(cancel_vf, pi)
    gamma = synthesize_markov_counter_strategy(cancel_vf, pi)
    n = cancel_vf.spatial_grid.size
    assert alpha.tables.shape == (2, n) and gamma.tables.shape == (2, n, 5)
    alpha.to_csv(tmp_path / "a.csv")
    gamma.to_csv(tmp_path / "g.csv")
    a = np.loadtxt(tmp_path / "a.csv", delimiter=",", skiprows=1, dtype=int)
    assert (tmp_path / "a.csv").read_text().startswith("k,node,u_index\n")
    assert (tmp_path / "g.csv").read_text().startswith("k,node,u_index,v_index\n")
    assert np.array_equal(a[:, 2].reshape(2, n), alpha.tables)
    with pytest.raises(GridError):
        SimpleMarkovStrategy(pi, alpha.tables[:1], alpha.spatial_grid, alpha.model)


def test_span_check(cancel_vf):
    with pytest.raises(GridError):
        synthesize_markov_strategy(cancel_vf, TimeGrid.uniform(0, 2, 4))


def test_sources_emit_grid_indices(cancel_vf, cancel_model):
    ids = np.arange(50)
    x = np.linspace(-2, 2, 50)[:, None]
    u = np.zeros(50, dtype=int)
    for src in (ConstantSource(3), RandomSource(1), ScheduleSource((0.0, 0.5, 1.0), (1, 4)),
                hamiltonian_feedback_source(cancel_vf), counter_response_source(cancel_vf)):
        out = np.asarray(src.player(cancel_model, ids, 0.0)(0.1, 0.05, x, u))
        n = len(cancel_model.U if src.label == "U" else cancel_model.V)
        assert np.all((0 <= out) & (out < n))
    sched = ScheduleSource((0.0, 0.5, 1.0), (1, 4)).player(cancel_model, ids, 0.0)
    assert sched(0.45, 0.05, x)[0] == 1 and sched(0.5, 0.05, x)[0] == 4
