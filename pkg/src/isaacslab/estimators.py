"""Estimator-style wrappers: ``fit`` on a model, ``predict`` at states."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .model import GameModel
from .solver import SpatialGrid, ValueFunction, solve_lower_isaacs
from .strategy import TimeGrid, synthesize_markov_counter_strategy, synthesize_markov_strategy


def check_states(X, d):
    """2-D finite float array with ``d`` columns; 1-D input is read as one state per row when ``d = 1``."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1 and d == 1:
        X = X[:, None]
    X = check_array(X, ensure_2d=True, dtype=float)
    if X.shape[1] != d:
        raise ValueError(f"expected {d} state columns, got {X.shape[1]}")
    return X


class LowerIsaacsSolver(BaseEstimator):
    """Fit solves the lower Isaacs equation on ``[lo, hi]^d``; predict returns the value at time ``s``."""

    def __init__(self, lo=-6.0, hi=6.0, dx=1 / 16, s=0.0, align=1, safety=0.9):
        self.lo = lo
        self.hi = hi
        self.dx = dx
        self.s = s
        self.align = align
        self.safety = safety

    def fit(self, model: GameModel, y=None):
        if not isinstance(model, GameModel):
            raise TypeError("fit expects a GameModel")
        grid = SpatialGrid.uniform(self.lo, self.hi, self.dx, model.d)
        self.value_function_ = solve_lower_isaacs(model, grid, self.s, align=self.align, safety=self.safety)
        self.model_ = model
        self.n_features_in_ = model.d
        return self

    def predict(self, X, t=None):
        check_is_fitted(self, "value_function_")
        X = check_states(X, self.n_features_in_)
        vf = self.value_function_
        return vf.value(vf.s if t is None else t, X)


class MarkovStrategySynthesizer(BaseEstimator):
    """Fit on a :class:`ValueFunction`; predict gives U actions on the first interval, transform the V responses."""

    def __init__(self, n_intervals=32):
        self.n_intervals = n_intervals

    def fit(self, value_function: ValueFunction, y=None):
        if not isinstance(value_function, ValueFunction) or value_function.model is None:
            raise TypeError("fit expects a ValueFunction carrying its model")
        if int(self.n_intervals) < 1:
            raise ValueError("n_intervals must be >= 1")
        pi = TimeGrid.uniform(value_function.s, value_function.T, int(self.n_intervals))
        self.strategy_ = synthesize_markov_strategy(value_function, pi)
        self.counter_strategy_ = synthesize_markov_counter_strategy(value_function, pi)
        self.n_features_in_ = value_function.spatial_grid.d
        return self

    def predict(self, X, k=1):
        """U action points of ``xi_k`` at snapshot states ``X``."""
        check_is_fitted(self, "strategy_")
        X = check_states(X, self.n_features_in_)
        return self.strategy_.model.U.points[self.strategy_.lookup(k, X)]

    def transform(self, X, k=1):
        """V action indices of ``eta_k`` for every U index: shape ``(n, |U|)``."""
        check_is_fitted(self, "counter_strategy_")
        X = check_states(X, self.n_features_in_)
        nodes = self.counter_strategy_.spatial_grid.nearest_index(X)
        return self.counter_strategy_.tables[k - 1, nodes]
