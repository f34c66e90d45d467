"""Time grids, simple Markov strategies / counter-strategies, and control sources.

A control source is anything the simulator can ask for per-path action
indices.  ``source.player(model, path_ids, start_time)`` returns a fresh
per-run callable ``step(t, dt, x, u_idx=None) -> indices`` so that sources
themselves stay immutable and thread-safe.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .errors import GridError
from .hamiltonian import operator_table, sup_inf
from .model import GameModel
from .solver import SpatialGrid, ValueFunction

_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Partition ``s = t_0 < t_1 < ... < t_n = T``."""

    times: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or len(t) < 2:
            raise GridError("a time grid needs at least two times")
        if np.any(np.diff(t) <= 0):
            raise GridError("time grid must be strictly increasing")
        t.setflags(write=False)
        object.__setattr__(self, "times", t)

    @classmethod
    def uniform(cls, s, T, n):
        return cls(np.linspace(s, T, int(n) + 1))

    @property
    def s(self):
        return float(self.times[0])

    @property
    def T(self):
        return float(self.times[-1])

    @property
    def n(self):
        return len(self.times) - 1

    @property
    def mesh(self):
        return float(np.max(np.diff(self.times)))

    def _tol(self):
        return _TOL * max(1.0, self.T - self.s)

    def interval(self, t):
        """1-based ``k`` with ``t_{k-1} < t <= t_k``."""
        tol = self._tol()
        if t <= self.s + tol or t > self.T + tol:
            raise GridError(f"t={t} outside ({self.s}, {self.T}]")
        k = int(np.searchsorted(self.times, t - tol, side="left"))
        return max(1, min(k, self.n))

    def is_grid_time(self, t):
        return bool(np.min(np.abs(self.times - t)) <= self._tol())

    def refine(self, factor):
        """Uniform subdivision of every interval into ``factor`` pieces."""
        pieces = [np.linspace(a, b, factor + 1)[:-1] for a, b in zip(self.times[:-1], self.times[1:])]
        return TimeGrid(np.concatenate(pieces + [self.times[-1:]]))


def _project(grid, u):
    """Nearest grid index for an action given as index or point."""
    if isinstance(u, (int, np.integer)):
        return int(u)
    return grid.nearest(u)


class ControlSource:
    """Base class; ``label`` is ``"U"`` or ``"V"``."""

    label = "U"
    name = "source"

    def player(self, m: GameModel, path_ids, start_time):
        raise NotImplementedError

    def grid_times(self):
        """Times at which this source must observe the state (empty for open-loop sources)."""
        return ()

    def describe(self):
        return {"kind": type(self).__name__, "name": self.name}


@dataclass(eq=False)
class ConstantSource(ControlSource):
    index: int
    label: str = "U"

    @property
    def name(self):
        return f"const[{self.index}]"

    def player(self, m, path_ids, start_time):
        out = np.full(len(path_ids), self.index, dtype=np.int64)
        return lambda t, dt, x, u_idx=None: out


@dataclass(eq=False)
class ScheduleSource(ControlSource):
    """Deterministic piecewise-constant schedule: ``indices[i]`` on ``(breaks[i], breaks[i+1]]``."""

    breaks: tuple
    indices: tuple
    label: str = "U"
    name: str = "schedule"

    def __post_init__(self):
        if len(self.breaks) != len(self.indices) + 1:
            raise ValueError("need one more break than indices")

    def player(self, m, path_ids, start_time):
        grid = TimeGrid(self.breaks)
        n = len(path_ids)

        def step(t, dt, x, u_idx=None):
            return np.full(n, self.indices[grid.interval(t + dt) - 1], dtype=np.int64)

        return step


@dataclass(eq=False)
class RandomSource(ControlSource):
    """Seeded random action, redrawn every ``hold`` (default: every simulation step)."""

    seed: int
    label: str = "U"
    hold: float = None
    name: str = "random"

    def player(self, m, path_ids, start_time):
        n_actions = len(m.U if self.label == "U" else m.V)
        ids = np.asarray(path_ids)

        def step(t, dt, x, u_idx=None):
            h = self.hold or dt
            slot = int(np.floor((t - start_time) / h + 1e-9))
            return rng.integers(self.seed, n_actions, rng.RANDOM_ACTIONS, ids, slot)

        return step

    def describe(self):
        return {"kind": "RandomSource", "name": self.name, "seed": self.seed, "hold": self.hold}


@dataclass(eq=False)
class FeedbackSource(ControlSource):
    """Feedback functional ``func(t, x, u_idx) -> indices`` of the current state.

    ``u_idx`` is the u-player's current action (``None`` for u-sources).
    """

    func: object
    label: str = "U"
    name: str = "feedback"

    def player(self, m, path_ids, start_time):
        return lambda t, dt, x, u_idx=None: np.asarray(self.func(t, x, u_idx), dtype=np.int64)


class _NodeTables:
    """Lazily computed per-level ``L`` tables over the nodes of a value function."""

    def __init__(self, vf: ValueFunction, m: GameModel):
        self.vf = vf
        self.m = m
        self.nodes = vf.spatial_grid.nodes()
        self._cache = {}

    def table(self, level):
        L = self._cache.get(level)
        if L is None:
            p, M = self.vf.derivative_tables(level)
            L = operator_table(self.m, self.vf.times[level], self.nodes, p, M)
            if len(self._cache) > 8:
                self._cache.clear()
            self._cache[level] = L
        return L


def counter_response_source(vf: ValueFunction, m: GameModel = None) -> FeedbackSource:
    """v-feedback: minimise ``L`` at the current state (nearest node/level) against the current u."""
    m = m or vf.model
    tables = _NodeTables(vf, m)

    def func(t, x, u_idx):
        L = tables.table(vf.nearest_level(t))
        node = vf.spatial_grid.nearest_index(x)
        return np.argmin(L[node, u_idx], axis=-1)

    return FeedbackSource(func, label="V", name="counter_response")


def hamiltonian_feedback_source(vf: ValueFunction, m: GameModel = None) -> FeedbackSource:
    """u-feedback: the sup-inf maximiser at the current state (nearest node/level)."""
    m = m or vf.model
    tables = _NodeTables(vf, m)

    def func(t, x, u_idx):
        L = tables.table(vf.nearest_level(t))
        node = vf.spatial_grid.nearest_index(x)
        return sup_inf(L)[1][node]

    return FeedbackSource(func, label="U", name="hamiltonian_feedback")


@dataclass(eq=False)
class SimpleMarkovStrategy(ControlSource):
    """``xi_k`` lookup tables: ``tables[k-1, node]`` is the U index used on ``(t_{k-1}, t_k]``."""

    grid: TimeGrid
    tables: np.ndarray
    spatial_grid: SpatialGrid
    model: GameModel
    solver_times: np.ndarray = None
    label: str = "U"
    name: str = "markov_strategy"

    def __post_init__(self):
        self.tables = np.asarray(self.tables, dtype=np.int64)
        if self.tables.shape != (self.grid.n, self.spatial_grid.size):
            raise GridError("strategy tables must have one row per interval and one column per node")
        self.tables.setflags(write=False)

    def grid_times(self):
        return tuple(self.grid.times)

    def lookup(self, k, X):
        """U indices of ``xi_k`` at snapshot states ``X`` (nearest node)."""
        return self.tables[k - 1, self.spatial_grid.nearest_index(X)]

    def player(self, m, path_ids, start_time):
        state = {"snap": None}

        def step(t, dt, x, u_idx=None):
            if state["snap"] is None or self.grid.is_grid_time(t):
                state["snap"] = np.array(x, copy=True)
            return self.lookup(self.grid.interval(t + dt), state["snap"])

        return step

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "node", "u_index"])
            for k in range(self.grid.n):
                for node, a in enumerate(self.tables[k]):
                    w.writerow([k + 1, node, int(a)])


@dataclass(eq=False)
class SimpleMarkovCounterStrategy(ControlSource):
    """``eta_k`` tables: ``tables[k-1, node, u]`` is the V index answering ``u`` given the snapshot node."""

    grid: TimeGrid
    tables: np.ndarray
    spatial_grid: SpatialGrid
    model: GameModel
    solver_times: np.ndarray = None
    label: str = "V"
    name: str = "markov_counter_strategy"

    def __post_init__(self):
        self.tables = np.asarray(self.tables, dtype=np.int64)
        expected = (self.grid.n, self.spatial_grid.size, len(self.model.U))
        if self.tables.shape != expected:
            raise GridError(f"counter-strategy tables must have shape {expected}")
        self.tables.setflags(write=False)

    def grid_times(self):
        return tuple(self.grid.times)

    def lookup(self, k, X, u_idx):
        return self.tables[k - 1, self.spatial_grid.nearest_index(X), u_idx]

    def player(self, m, path_ids, start_time):
        state = {"snap": None}

        def step(t, dt, x, u_idx=None):
            if state["snap"] is None or self.grid.is_grid_time(t):
                state["snap"] = np.array(x, copy=True)
            return self.lookup(self.grid.interval(t + dt), state["snap"], u_idx)

        return step

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "node", "u_index", "v_index"])
            for k in range(self.grid.n):
                for node in range(self.spatial_grid.size):
                    for iu, iv in enumerate(self.tables[k, node]):
                        w.writerow([k + 1, node, iu, int(iv)])


def _check_span(vf, pi):
    tol = _TOL * max(1.0, vf.T - vf.s)
    if pi.s < vf.s - tol or pi.T > vf.T + tol:
        raise GridError(f"time grid [{pi.s}, {pi.T}] is not within the value function span [{vf.s}, {vf.T}]")


def _synthesis_tables(vf: ValueFunction, pi: TimeGrid, m: GameModel):
    _check_span(vf, pi)
    tables = _NodeTables(vf, m)
    for k in range(1, pi.n + 1):
        t = pi.times[k - 1]
        level = vf.nearest_level(t)
        p, M = vf.derivative_tables(level)
        yield operator_table(m, t, tables.nodes, p, M)


def synthesize_markov_strategy(vf: ValueFunction, pi: TimeGrid, m: GameModel = None) -> SimpleMarkovStrategy:
    """``xi_k(x)`` = sup-inf maximiser at ``(t_{k-1}, x)`` with derivatives of ``vf`` there."""
    m = m or vf.model
    rows = [sup_inf(L)[1] for L in _synthesis_tables(vf, pi, m)]
    return SimpleMarkovStrategy(pi, np.array(rows), vf.spatial_grid, m, solver_times=vf.times)


def synthesize_markov_counter_strategy(vf: ValueFunction, pi: TimeGrid, m: GameModel = None) -> SimpleMarkovCounterStrategy:
    """``eta_k(x, u)`` = minimiser of ``L(t_{k-1}, x, u, ., p, M)``, lowest index on ties."""
    m = m or vf.model
    rows = [np.argmin(L, axis=-1) for L in _synthesis_tables(vf, pi, m)]
    return SimpleMarkovCounterStrategy(pi, np.array(rows), vf.spatial_grid, m, solver_times=vf.times)


def strategy_action(alpha: SimpleMarkovStrategy, t, snapshot_x):
    """U action on the interval containing ``t`` for the snapshot taken at its left end."""
    k = alpha.grid.interval(t)
    x = np.atleast_1d(np.asarray(snapshot_x, dtype=float))[None, :]
    return alpha.model.U.points[alpha.lookup(k, x)[0]]


def counter_action(gamma: SimpleMarkovCounterStrategy, t, snapshot_x, u):
    """V response to ``u`` (projected to the nearest U grid point) for the interval containing ``t``."""
    k = gamma.grid.interval(t)
    iu = _project(gamma.model.U, u)
    x = np.atleast_1d(np.asarray(snapshot_x, dtype=float))[None, :]
    return gamma.model.V.points[gamma.lookup(k, x, np.array([iu]))[0]]
