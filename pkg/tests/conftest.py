import numpy as np
import pytest

from isaacslab import SpatialGrid, make_model, solve_lower_isaacs

GRID5 = np.linspace(-1, 1, 5)[:, None]


def cancellation(n=5, T=1.0):
    pts = np.linspace(-1, 1, n)[:, None]
    return make_model("u1 + v1", "1", "cos(x1)", pts, pts, T=T, name="cancellation")


def sign_game(sigma="0", g="x1"):
    return make_model("u1 * v1", sigma, g, [[-1.0], [1.0]], [[-1.0], [1.0]], name="sign")


def drift_game(sigma="1"):
    return make_model("u1", sigma, "x1", [[-1.0], [0.0], [1.0]], [[0.0]], name="drift")


def heat(g="cos(x1)", T=1.0):
    return make_model("0", "1", g, [[0.0]], [[0.0]], T=T, name="heat")


@pytest.fixture(scope="session")
def cancel_model():
    return cancellation()


@pytest.fixture(scope="session")
def cancel_vf(cancel_model):
    return solve_lower_isaacs(cancel_model, SpatialGrid.uniform(-6, 6, 1 / 16), align=32)


@pytest.fixture(scope="session")
def drift_vf():
    return solve_lower_isaacs(drift_game(), SpatialGrid.uniform(-6, 6, 1 / 16), align=32)
