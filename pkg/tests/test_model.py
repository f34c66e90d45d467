import numpy as np
import pytest

from isaacslab import ActionGrid, ConfigError, audit_assumptions, load_model, make_model

CANCEL = """
[dynamics]
d = 1
T = 1.0
b = ["u1+v1"]
sigma = [["1"]]
g = "cos(x1)"

[actions]
u_grid = {min = -1, max = 1, count = 3}
v_grid = {min = -1, max = 1, count = 3}
"""


def test_load_cancellation():
    m = load_model(CANCEL)
    assert m.d == 1 and m.d_prime == 1 and m.T == 1.0
    assert np.array_equal(m.U.points[:, 0], [-1, 0, 1])
    assert len(m.V) == 3
    assert m.depends_on_u and m.depends_on_v and not m.time_dependent


def test_missing_g():
    with pytest.raises(ConfigError, match="g"):
        load_model(CANCEL.replace('g = "cos(x1)"\n', ""))


def test_undeclared_variable():
    with pytest.raises(ConfigError, match="x2"):
        load_model(CANCEL.replace('b = ["u1+v1"]', 'b = ["x2"]'))


def test_dimension_mismatch():
    with pytest.raises(ConfigError):
        load_model(CANCEL.replace('b = ["u1+v1"]', 'b = ["u1", "v1"]'))


def test_payoff_must_be_state_only():
    with pytest.raises(ConfigError):
        load_model(CANCEL.replace('g = "cos(x1)"', 'g = "u1"'))


def test_product_grid_and_points():
    text = CANCEL.replace("u_grid = {min = -1, max = 1, count = 3}",
                          "u_grid = [{min = 0, max = 1, count = 2}, {min = -1, max = 1, count = 3}]")
    text = text.replace('b = ["u1+v1"]', 'b = ["u1+u2+v1"]')
    m = load_model(text)
    assert m.U.points.shape == (6, 2)
    assert m.U.points[0].tolist() == [0, -1] and m.U.points[1].tolist() == [0, 0]
    m2 = load_model(CANCEL.replace("v_grid = {min = -1, max = 1, count = 3}", "v_points = [[0.5]]"))
    assert m2.V.points.tolist() == [[0.5]]


def test_action_grid_invariants():
    with pytest.raises(ValueError):
        ActionGrid(np.zeros((0, 1)), "U")
    with pytest.raises(ValueError):
        ActionGrid(np.array([[0.0], [0.0]]), "U")


def test_config_round_trip():
    m = load_model(CANCEL)
    again = load_model(m.to_config())
    assert np.array_equal(again.U.points, m.U.points)
    X = np.linspace(-2, 2, 7)[:, None]
    assert np.array_equal(again.coefficient_tables(0.0, X)[0], m.coefficient_tables(0.0, X)[0])


def test_audit_x_independent_is_zero():
    m = load_model(CANCEL)
    for K in (0.5, 3.0, 50.0):
        assert audit_assumptions(m, 300, K, seed=1).lipschitz_estimate == 0.0


def test_audit_linear_growth():
    m = make_model("x1", "1", "x1", [[0.0]], [[0.0]])
    small = audit_assumptions(make_model("x1", "0", "x1", [[0.0]], [[0.0]]), 3000, 1.0, seed=2).growth_constant
    big = audit_assumptions(make_model("x1", "0", "x1", [[0.0]], [[0.0]]), 3000, 1000.0, seed=2).growth_constant
    assert small <= 1.0 and big <= 1.0
    assert big > 0.99 and big > small
    assert audit_assumptions(m, 100, 1.0).lipschitz_estimate == pytest.approx(1.0)


def test_audit_quadratic_lipschitz():
    m = make_model("x1^2", "1", "x1", [[0.0]], [[0.0]])
    rep = audit_assumptions(m, 3000, 10.0, seed=3)
    assert rep.lipschitz_estimate == pytest.approx(20.0, rel=0.05)
    assert all(rep.continuity_flags.values())


def test_audit_prefix_monotone():
    m = make_model(["x1^2 - x2", "sin(x1*x2)"], [["1", "x1"], ["0", "1"]], "x1", [[0.0]], [[0.0]])
    prev = None
    for n in (10, 50, 200, 800):
        rep = audit_assumptions(m, n, 2.0, seed=9)
        if prev is not None:
            assert rep.lipschitz_estimate >= prev.lipschitz_estimate
            assert rep.growth_constant >= prev.growth_constant
        prev = rep


def test_audit_flags_discontinuity():
    m = make_model("abs(x1)/x1", "1", "x1", [[0.0]], [[0.0]])
    # x = 0 is never sampled exactly, so the sign jump only shows via the Lipschitz estimate
    rep = audit_assumptions(m, 3000, 1.0, seed=0)
    assert rep.lipschitz_estimate > 10


def test_audit_deterministic():
    m = load_model(CANCEL)
    assert audit_assumptions(m, 100, 2.0, 5) == audit_assumptions(m, 100, 2.0, 5)
