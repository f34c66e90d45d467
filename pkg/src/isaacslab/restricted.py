"""Values of the synthesized strategies against best-responding opponents.

Both sweeps reuse the solver's time levels and upwind operator, so the
discrete comparison principle holds exactly: the strategy value can never
beat the unrestricted solver value on the same grid (up to round-off).

* ``adversary_best_response_value`` freezes the u-action ``a = xi_k(x)`` on
  each macro-interval and lets v minimise at every solver step.
* ``controller_best_response_value`` freezes the snapshot node ``x_hat``
  (through the row ``eta_k(x_hat, .)``) and lets u maximise at every step.
  Snapshot nodes with identical rows share one sweep.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import CFLError, GridError, NonFiniteValueError
from .solver import SchemeOperator, SpatialGrid, ValueFunction
from .strategy import SimpleMarkovCounterStrategy, SimpleMarkovStrategy, TimeGrid


@dataclass(eq=False)
class AugmentedValue:
    """Per-interval values over (frozen coordinate, node).

    ``slices[k-1]`` holds the sweep result at ``t_{k-1}`` before the reset,
    one row per frozen class; ``class_maps[k-1][j]`` is the row used for
    frozen coordinate ``j`` (a U index for lower values, a snapshot node for
    upper values).  ``resets[k-1]`` is the value at ``t_{k-1}`` once the
    frozen coordinate is re-derived from the current state; ``resets[0]`` is
    the strategy value at the start time.
    """

    kind: str
    grid: TimeGrid
    spatial_grid: SpatialGrid
    terminal: np.ndarray
    slices: list
    class_maps: list
    resets: list
    meta: dict = field(default_factory=dict)

    @property
    def start_values(self):
        return self.resets[0]

    def value(self, X):
        """Strategy value at ``(s, x)`` for the rows of ``X`` (linear interpolation between nodes)."""
        X = np.atleast_2d(np.asarray(X, dtype=float)).reshape(-1, self.spatial_grid.d)
        vf = ValueFunction(self.spatial_grid, np.array([self.grid.s, self.grid.T]),
                           np.stack([self.start_values.reshape(self.spatial_grid.shape)] * 2))
        return vf.value(self.grid.s, X)

    def frozen_slice(self, k):
        """Full ``(n_frozen, N)`` array at ``t_{k-1}`` indexed by the frozen coordinate."""
        return self.slices[k - 1][self.class_maps[k - 1]]


def _levels(solver_times, pi: TimeGrid):
    if solver_times is None:
        raise GridError("strategy carries no solver time levels")
    times = np.asarray(solver_times)
    tol = 1e-9 * max(1.0, times[-1] - times[0])
    idx = []
    for t in pi.times:
        k = int(np.argmin(np.abs(times - t)))
        if abs(times[k] - t) > tol:
            raise GridError(f"time grid point {t} is not a solver time level")
        idx.append(k)
    return times, idx


def _step(W, h, L, rate, t):
    if h * float(np.max(rate)) > 1.0 + 1e-12:
        raise CFLError(f"step {h:.3g} violates the monotonicity bound at t={t:.6g}")
    out = W + h * L
    if not np.all(np.isfinite(out)):
        raise NonFiniteValueError(f"non-finite value at t={t:.6g}")
    return out


def adversary_best_response_value(m, alpha: SimpleMarkovStrategy) -> AugmentedValue:
    """Numerical ``inf_v E[g(X_T)]`` when u plays ``alpha`` (the lower restricted value)."""
    grid = alpha.spatial_grid
    if grid.d != m.d or alpha.tables.shape[1] != grid.size:
        raise GridError("strategy grid does not match the model")
    times, idx = _levels(alpha.solver_times, alpha.grid)
    op = SchemeOperator(m, grid)
    nu = len(m.U)
    g = m.payoff(op.nodes)
    W = np.tile(g, (nu, 1))
    terminal = W.copy()
    slices, resets = [None] * alpha.grid.n, [None] * alpha.grid.n
    nodes = np.arange(grid.size)
    for k in range(alpha.grid.n, 0, -1):
        for lev in range(idx[k] - 1, idx[k - 1] - 1, -1):
            t, h = times[lev + 1], times[lev + 1] - times[lev]
            new = np.empty_like(W)
            for a in range(nu):
                L, rate = op.table(t, W[a].reshape(grid.shape), u_index=a)
                new[a] = _step(W[a], h, L[:, 0, :].min(axis=1), rate, t)
            W = new
        slices[k - 1] = W.copy()
        reset = W[alpha.tables[k - 1], nodes]
        resets[k - 1] = reset
        W = np.tile(reset, (nu, 1))
    maps = [np.arange(nu)] * alpha.grid.n
    return AugmentedValue("lower", alpha.grid, grid, terminal, slices, maps, resets,
                          meta={"frozen": "u_index"})


def controller_best_response_value(m, gamma: SimpleMarkovCounterStrategy) -> AugmentedValue:
    """Numerical ``sup_u E[g(X_T)]`` when v plays ``gamma`` (the upper restricted value).

    One-dimensional models only: the augmented state is (x, snapshot node).
    """
    if m.d != 1:
        raise GridError("controller_best_response_value supports d = 1 only")
    grid = gamma.spatial_grid
    times, idx = _levels(gamma.solver_times, gamma.grid)
    op = SchemeOperator(m, grid)
    nu = len(m.U)
    g = m.payoff(op.nodes)
    terminal = g[None, :].copy()
    slices, maps, resets = [None] * gamma.grid.n, [None] * gamma.grid.n, [None] * gamma.grid.n
    nodes = np.arange(grid.size)
    R = g
    u_rows = np.arange(nu)
    for k in range(gamma.grid.n, 0, -1):
        rows, class_of = np.unique(gamma.tables[k - 1], axis=0, return_inverse=True)
        class_of = np.asarray(class_of).ravel()
        W = np.tile(R, (len(rows), 1))
        for lev in range(idx[k] - 1, idx[k - 1] - 1, -1):
            t, h = times[lev + 1], times[lev + 1] - times[lev]
            new = np.empty_like(W)
            for c, vrow in enumerate(rows):
                L, rate = op.table(t, W[c].reshape(grid.shape))
                Lc = L[:, u_rows, vrow]
                rc = rate[:, u_rows, vrow]
                new[c] = _step(W[c], h, Lc.max(axis=1), rc, t)
            W = new
        slices[k - 1] = W.copy()
        maps[k - 1] = class_of
        R = W[class_of, nodes]
        resets[k - 1] = R
    return AugmentedValue("upper", gamma.grid, grid, terminal, slices, maps, resets,
                          meta={"frozen": "snapshot_node"})


@dataclass
class GapRow:
    mesh: float
    x: tuple
    v_pi_minus: float
    v_fd: float
    v_pi_plus: float
    tol: float

    @property
    def gap_lo(self):
        return self.v_fd - self.v_pi_minus

    @property
    def gap_hi(self):
        return self.v_pi_plus - self.v_fd

    @property
    def violation(self):
        return self.gap_lo < -self.tol or self.gap_hi < -self.tol


@dataclass
class GapTable:
    rows: list

    HEADER = ("mesh", "x", "v_pi_minus", "v_fd", "v_pi_plus", "gap_lo", "gap_hi", "tol")

    @property
    def violations(self):
        return [r for r in self.rows if r.violation]

    def meshes(self):
        return sorted({r.mesh for r in self.rows}, reverse=True)

    def max_gap(self, mesh):
        """Largest ``v_pi_plus - v_pi_minus`` over reporting points at ``mesh``."""
        return max(r.v_pi_plus - r.v_pi_minus for r in self.rows if r.mesh == mesh)

    def max_one_sided_gap(self, mesh):
        """Largest of ``gap_lo`` and ``gap_hi`` over reporting points at ``mesh``."""
        return max(max(r.gap_lo, r.gap_hi) for r in self.rows if r.mesh == mesh)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.HEADER)
            for r in self.rows:
                x = r.x[0] if len(r.x) == 1 else " ".join(repr(float(c)) for c in r.x)
                w.writerow([repr(r.mesh), x if isinstance(x, str) else repr(float(x)), repr(r.v_pi_minus),
                            repr(r.v_fd), repr(r.v_pi_plus), repr(r.gap_lo), repr(r.gap_hi), repr(r.tol)])


def sandwich_report(V_fd: ValueFunction, lowers, uppers, points, tol=1e-10) -> GapTable:
    """Rows ``(mesh, x, v_pi^-, V_fd, v_pi^+)`` for matching lists of lower/upper values.

    ``uppers`` may contain ``None`` entries where no upper value was computed
    (then ``v_pi_plus`` is NaN and only the lower side is checked).
    """
    points = np.atleast_2d(np.asarray(points, dtype=float)).reshape(-1, V_fd.spatial_grid.d)
    if len(lowers) != len(uppers):
        raise ValueError("lowers and uppers must pair up per mesh")
    rows = []
    v_fd = V_fd.value(V_fd.s, points)
    for lo, up in zip(lowers, uppers):
        mesh = lo.grid.mesh
        if up is not None and not np.allclose(up.grid.times, lo.grid.times):
            raise ValueError("lower and upper values use different time grids")
        if abs(lo.grid.s - V_fd.s) > 1e-12:
            raise ValueError("restricted values start at a different time than the solver value")
        vm = lo.value(points)
        vp = up.value(points) if up is not None else np.full(len(points), np.nan)
        tols = np.broadcast_to(np.asarray(tol, dtype=float), (len(points),))
        for x, a, b, c, tl in zip(points, vm, v_fd, vp, tols):
            rows.append(GapRow(mesh, tuple(float(z) for z in x), float(a), float(b), float(c), float(tl)))
    return GapTable(rows)
