import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isaacslab import (CFLError, GridError, SpatialGrid, cfl_step, make_model, query_value, read_value_csv,
                       solve_lower_isaacs)
from isaacslab.solver import SchemeOperator, time_levels

from conftest import GRID5, cancellation, heat


def gauss_hermite_heat(f, var, n=80):
    """E[f(sqrt(var) Z)] by Gauss-Hermite quadrature (probabilists' weights)."""
    z, w = np.polynomial.hermite_e.hermegauss(n)
    return float(np.sum(w * f(np.sqrt(var) * z)) / np.sqrt(2 * np.pi))


def test_cfl_examples():
    g = SpatialGrid.uniform(-1, 1, 0.1)
    assert cfl_step(heat(), g) == pytest.approx(0.009)
    transport = make_model("1", "0", "x1", [[0.0]], [[0.0]])
    assert cfl_step(transport, g) == pytest.approx(0.09)
    fine = SpatialGrid.uniform(-1, 1, 0.05)
    assert cfl_step(heat(), fine) == pytest.approx(cfl_step(heat(), g) / 4)
    assert cfl_step(make_model("0", "0", "x1", [[0.0]], [[0.0]]), g) == math.inf


def test_grid_validation():
    with pytest.raises(GridError):
        SpatialGrid([0.0], [1.0], [2])
    with pytest.raises(GridError):
        SpatialGrid([1.0], [0.0], [5])
    g = SpatialGrid.uniform(-1, 1, 0.25)
    assert g.size == 9 and g.dx[0] == 0.25


def test_frozen_dynamics_constant_in_time():
    m = make_model("0", "0", "sin(x1)", [[0.0]], [[0.0]])
    g = SpatialGrid.uniform(-2, 2, 0.25)
    vf = solve_lower_isaacs(m, g, dt=0.1)
    assert np.array_equal(vf.values[0], m.payoff(g.nodes()))
    assert np.all(vf.values == vf.values[-1])


def test_heat_anchor_against_quadrature():
    oracle = gauss_hermite_heat(np.cos, 1.0)
    assert oracle == pytest.approx(math.exp(-0.5), abs=1e-14)
    vf = solve_lower_isaacs(heat(), SpatialGrid.uniform(-8, 8, 1 / 64))
    assert abs(vf.value(0.0, [[0.0]])[0] - oracle) < 2e-3


def test_cancellation_matches_heat(cancel_vf):
    hv = solve_lower_isaacs(heat(), SpatialGrid.uniform(-6, 6, 1 / 16), align=32)
    inner = np.linspace(-3, 3, 49)[:, None]
    assert np.max(np.abs(cancel_vf.value(0.0, inner) - hv.value(0.0, inner))) < 5e-3


def test_terminal_and_maximum_principle(cancel_vf, cancel_model):
    g = cancel_model.payoff(cancel_vf.spatial_grid.nodes())
    assert np.array_equal(cancel_vf.values[-1], g)
    assert cancel_vf.values.min() >= g.min() and cancel_vf.values.max() <= g.max()
    assert list(cancel_vf.time_levels) == sorted(cancel_vf.times, reverse=True)


def test_query_value(cancel_vf):
    k, node = 5, 100
    x = cancel_vf.spatial_grid.nodes()[node]
    val, dp = query_value(cancel_vf, cancel_vf.times[k], x)
    assert val == cancel_vf.values[k][node]
    hv = solve_lower_isaacs(heat(), SpatialGrid.uniform(-6, 6, 1 / 16))
    _, dp0 = query_value(hv, 0.0, [0.0])
    assert abs(dp0.p[0]) < 1e-3
    assert dp0.M[0, 0] == pytest.approx(-math.exp(-0.5), abs=5e-3)
    with pytest.raises(GridError):
        query_value(cancel_vf, 0.0, [7.0])
    with pytest.raises(GridError):
        cancel_vf.value(1.5, [[0.0]])


def test_value_interpolates_linearly_in_time(cancel_vf):
    t0, t1 = cancel_vf.times[3], cancel_vf.times[4]
    x = [[0.3]]
    mid = cancel_vf.value(0.5 * (t0 + t1), x)[0]
    assert mid == pytest.approx(0.5 * (cancel_vf.value(t0, x)[0] + cancel_vf.value(t1, x)[0]), abs=1e-15)


@settings(max_examples=25, deadline=None)
@given(st.floats(min_value=0.0, max_value=0.5), st.floats(min_value=-2, max_value=2))
def test_scheme_monotone_in_payoff(bump, centre):
    g1 = "cos(x1)"
    g2 = f"cos(x1) + {bump!r} * exp(-(x1 - {centre!r})^2)"
    grid = SpatialGrid.uniform(-4, 4, 0.125)
    m1, m2 = cancellation(), cancellation()
    m2 = m2.with_payoff(g2)
    v1 = solve_lower_isaacs(m1.with_payoff(g1), grid, dt=cfl_step(m1, grid))
    v2 = solve_lower_isaacs(m2, grid, dt=cfl_step(m1, grid))
    assert np.all(v1.values <= v2.values)


def test_constant_payoff():
    m = make_model("u1 * x1 + v1", "1 + 0.5 * sin(x1 * u1)", "3.25", GRID5, GRID5)
    vf = solve_lower_isaacs(m, SpatialGrid.uniform(-3, 3, 0.25))
    assert np.all(vf.values == 3.25)


def test_consistency_on_quadratics():
    m = make_model("u1", "1", "x1", [[0.7]], [[0.0]])
    res = []
    for dx in (0.1, 0.05, 0.025):
        grid = SpatialGrid.uniform(-2, 2, dx)
        op = SchemeOperator(m, grid)
        v = grid.nodes()[:, 0] ** 2
        L, _ = op.table(0.0, v.reshape(grid.shape))
        exact = 0.7 * 2 * grid.nodes()[:, 0] + 0.5 * 2
        interior = ~grid.boundary_mask(0).ravel()
        res.append(np.max(np.abs(L[interior, 0, 0] - exact[interior])))
    # upwind first difference is off by |b| dx exactly; the second difference is exact
    assert res == pytest.approx([0.07, 0.035, 0.0175], rel=1e-6)


def test_cfl_violation():
    grid = SpatialGrid.uniform(-2, 2, 0.1)
    with pytest.raises(CFLError):
        solve_lower_isaacs(heat(), grid, dt=0.02)


def test_time_levels_alignment():
    t = time_levels(0.0, 1.0, 0.03, align=8)
    assert (len(t) - 1) % 8 == 0 and t[1] - t[0] <= 0.03
    with pytest.raises(GridError):
        time_levels(1.0, 1.0, 0.1)


def test_csv_round_trip(tmp_path, cancel_vf):
    path = tmp_path / "v.csv"
    cancel_vf.to_csv(path, every=100)
    assert path.read_text().splitlines()[0] == "t,x1,value"
    t, X, vals = read_value_csv(path)
    last = t == cancel_vf.T
    assert np.array_equal(vals[last], cancel_vf.values[-1])
    first = t == cancel_vf.s
    assert np.array_equal(X[first][:, 0], cancel_vf.spatial_grid.nodes()[:, 0])


def test_two_dimensional_correlated_heat():
    rho = 0.5
    m = make_model(["0", "0"], [["1", "0"], [f"{rho}", f"{math.sqrt(1 - rho ** 2)!r}"]], "cos(x1 + x2)",
                   [[0.0]], [[0.0]])
    grid = SpatialGrid.uniform(-5, 5, 0.125, d=2)
    vf = solve_lower_isaacs(m, grid)
    exact = math.exp(-(1 + rho))
    assert abs(vf.value(0.0, [[0.0, 0.0]])[0] - exact) < 2e-2
    g = m.payoff(grid.nodes())
    assert vf.values.min() >= g.min() and vf.values.max() <= g.max()
    with pytest.raises(GridError):
        vf.value(0.0, [[6.0, 0.0]])
