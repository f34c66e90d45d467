"""Explicit monotone upwind scheme for the terminal-value lower Isaacs equation.

Backward sweep ``v^n = v^{n+1} + dt * max_u min_v L_h(u, v)`` where ``L_h``
upwinds the drift per action pair, uses central second differences and a
sign-dependent (Kushner) stencil for cross derivatives.  Boundary nodes use a
zero-second-derivative closure: diffusion is dropped there, drift pointing
into the box is upwinded from the interior and drift pointing out of the box
contributes nothing, which keeps every update a convex combination.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import CFLError, GridError, NonFiniteValueError
from .hamiltonian import DerivativePair, sup_inf
from .model import GameModel

logger = logging.getLogger(__name__)

BOUNDARY_MODE = "zero-second-derivative, inflow-upwind, outflow-dropped"


@dataclass(frozen=True, eq=False)
class SpatialGrid:
    mins: tuple
    maxs: tuple
    counts: tuple

    def __post_init__(self):
        mins = tuple(float(a) for a in np.atleast_1d(self.mins))
        maxs = tuple(float(a) for a in np.atleast_1d(self.maxs))
        counts = tuple(int(n) for n in np.atleast_1d(self.counts))
        if not len(mins) == len(maxs) == len(counts):
            raise GridError("mins, maxs and counts must have the same length")
        for lo, hi, n in zip(mins, maxs, counts):
            if not lo < hi:
                raise GridError(f"degenerate grid: min {lo} >= max {hi}")
            if n < 3:
                raise GridError(f"grid needs at least 3 points per dimension, got {n}")
        object.__setattr__(self, "mins", mins)
        object.__setattr__(self, "maxs", maxs)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def uniform(cls, lo, hi, dx, d=1):
        """Grid on ``[lo, hi]^d`` with spacing ``dx`` (``(hi - lo) / dx`` must be an integer)."""
        n = (hi - lo) / dx
        if abs(n - round(n)) > 1e-9 * max(1.0, abs(n)):
            raise GridError(f"({hi} - {lo}) / {dx} is not an integer")
        return cls((lo,) * d, (hi,) * d, (int(round(n)) + 1,) * d)

    @property
    def d(self):
        return len(self.counts)

    @property
    def shape(self):
        return self.counts

    @property
    def size(self):
        return int(np.prod(self.counts))

    @property
    def dx(self):
        return tuple((hi - lo) / (n - 1) for lo, hi, n in zip(self.mins, self.maxs, self.counts))

    @property
    def axes(self):
        return tuple(np.linspace(lo, hi, n) for lo, hi, n in zip(self.mins, self.maxs, self.counts))

    def nodes(self):
        """All nodes as an ``(N, d)`` array in C order."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=1)

    def contains(self, x, tol=1e-12):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        lo = np.asarray(self.mins) - tol * (1 + np.abs(self.mins))
        hi = np.asarray(self.maxs) + tol * (1 + np.abs(self.maxs))
        return np.all((x >= lo) & (x <= hi), axis=1)

    def nearest_index(self, x):
        """Flat index of the nearest node to each row of ``x`` (clipped into the box)."""
        x = np.atleast_2d(np.asarray(x, dtype=float)).reshape(-1, self.d)
        multi = []
        for i, (lo, h, n) in enumerate(zip(self.mins, self.dx, self.counts)):
            multi.append(np.clip(np.floor((x[:, i] - lo) / h + 0.5).astype(np.int64), 0, n - 1))
        return np.ravel_multi_index(multi, self.counts)

    def boundary_mask(self, axis):
        """Boolean ``shape`` array, True on the two faces normal to ``axis``."""
        mask = np.zeros(self.counts, dtype=bool)
        idx = [slice(None)] * self.d
        idx[axis] = 0
        mask[tuple(idx)] = True
        idx[axis] = -1
        mask[tuple(idx)] = True
        return mask


@dataclass(eq=False)
class ValueFunction:
    """Space-time table of the numerical value.

    ``times`` ascend from the start time ``s`` to ``T``; ``values[k]`` has the
    grid's shape and holds the solution at ``times[k]``.
    """

    spatial_grid: SpatialGrid
    times: np.ndarray
    values: np.ndarray
    model: GameModel = None
    boundary_mode: str = BOUNDARY_MODE
    dt: float = None
    _interp: dict = field(default_factory=dict, repr=False)

    @property
    def time_levels(self):
        """Solver times from ``T`` down to ``s``."""
        return self.times[::-1]

    @property
    def s(self):
        return float(self.times[0])

    @property
    def T(self):
        return float(self.times[-1])

    def level_index(self, t, tol=1e-9):
        """Index of the stored time level equal to ``t`` (GridError if none)."""
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > tol * max(1.0, abs(self.T - self.s)):
            raise GridError(f"time {t} is not a solver time level")
        return k

    def nearest_level(self, t):
        return int(np.argmin(np.abs(self.times - t)))

    def _check_domain(self, t, X):
        if t < self.s - 1e-12 or t > self.T + 1e-12:
            raise GridError(f"time {t} outside [{self.s}, {self.T}]")
        inside = self.spatial_grid.contains(X)
        if not np.all(inside):
            bad = np.atleast_2d(X)[~inside][0]
            raise GridError(f"point {bad.tolist()} outside the spatial grid")

    def _level_interp(self, k):
        f = self._interp.get(k)
        if f is None:
            f = RegularGridInterpolator(self.spatial_grid.axes, self.values[k], method="linear")
            self._interp[k] = f
            if len(self._interp) > 64:
                self._interp.pop(next(iter(self._interp)))
        return f

    def _spatial(self, k, X):
        g = self.spatial_grid
        if g.d == 1:
            return np.interp(X[:, 0], g.axes[0], self.values[k])
        X = np.clip(X, g.mins, g.maxs)
        return self._level_interp(k)(X)

    def value(self, t, X):
        """Values at points ``X`` (shape ``(n, d)``), linear in time, multilinear in space."""
        X = np.atleast_2d(np.asarray(X, dtype=float)).reshape(-1, self.spatial_grid.d)
        self._check_domain(t, X)
        t = min(max(t, self.s), self.T)
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        k = min(max(k, 0), len(self.times) - 2)
        t0, t1 = self.times[k], self.times[k + 1]
        w = (t - t0) / (t1 - t0)
        lo = self._spatial(k, X)
        if w == 0.0:
            return lo
        return (1 - w) * lo + w * self._spatial(k + 1, X)

    def derivative_tables(self, k):
        """Finite-difference ``p`` ``(N, d)`` and ``M`` ``(N, d, d)`` at every node of level ``k``.

        Central differences in the interior, one-sided first differences on
        the boundary; second derivatives vanish on the boundary (matching the
        solver's closure).
        """
        return _derivatives(self.values[k], self.spatial_grid)

    def derivatives(self, t, X):
        """``(p, M)`` at the nearest node of the nearest time level, per row of ``X``."""
        X = np.atleast_2d(np.asarray(X, dtype=float)).reshape(-1, self.spatial_grid.d)
        self._check_domain(t, X)
        p, M = self.derivative_tables(self.nearest_level(t))
        idx = self.spatial_grid.nearest_index(X)
        return p[idx], M[idx]

    def to_csv(self, path, every=1):
        """Write rows ``t, x1..xd, value`` for every ``every``-th level (plus both end levels)."""
        levels = sorted(set(range(0, len(self.times), max(1, every))) | {0, len(self.times) - 1})
        write_value_csv(path, self.spatial_grid, [(self.times[k], self.values[k]) for k in levels])


def write_value_csv(path, grid, slices):
    nodes = grid.nodes()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"x{i + 1}" for i in range(grid.d)] + ["value"])
        for t, vals in slices:
            for x, v in zip(nodes, np.ravel(vals)):
                w.writerow([repr(float(t))] + [repr(float(c)) for c in x] + [repr(float(v))])


def read_value_csv(path):
    """Rows of a value CSV as ``(times, X, values)`` arrays."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1:-1], data[:, -1]


def _derivatives(values, grid):
    d = grid.d
    dx = grid.dx
    N = grid.size
    p = np.zeros((N, d))
    M = np.zeros((N, d, d))
    v = values
    for i in range(d):
        g = np.gradient(v, dx[i], axis=i, edge_order=1)
        p[:, i] = g.ravel()
        d2 = np.zeros_like(v)
        core = [slice(None)] * d
        core[i] = slice(1, -1)
        plus = [slice(None)] * d
        plus[i] = slice(2, None)
        minus = [slice(None)] * d
        minus[i] = slice(None, -2)
        d2[tuple(core)] = (v[tuple(plus)] - 2 * v[tuple(core)] + v[tuple(minus)]) / dx[i] ** 2
        M[:, i, i] = d2.ravel()
    for i in range(d):
        for j in range(i + 1, d):
            c = np.zeros_like(v)
            core = [slice(1, -1) if a in (i, j) else slice(None) for a in range(d)]

            def sh(si, sj):
                idx = []
                for a in range(d):
                    if a == i:
                        idx.append(slice(1 + si, v.shape[a] - 1 + si))
                    elif a == j:
                        idx.append(slice(1 + sj, v.shape[a] - 1 + sj))
                    else:
                        idx.append(slice(None))
                return v[tuple(idx)]

            c[tuple(core)] = (sh(1, 1) - sh(1, -1) - sh(-1, 1) + sh(-1, -1)) / (4 * dx[i] * dx[j])
            M[:, i, j] = M[:, j, i] = c.ravel()
    return p, M


def _rate(b, a, dx):
    """Per (node, u, v) sum of |b_i|/dx_i + a_ii/dx_i^2."""
    out = np.zeros(b.shape[:-1])
    for i, h in enumerate(dx):
        out += np.abs(b[..., i]) / h + a[..., i, i] / h**2
    return out


def _tables(m, grid, t, nodes):
    b, s = m.coefficient_tables(t, nodes)
    a = np.einsum("nuvik,nuvjk->nuvij", s, s)
    return b, a


def cfl_step(m: GameModel, grid: SpatialGrid, safety: float = 0.9, times=None) -> float:
    """Largest explicit step keeping the scheme monotone, times ``safety``.

    ``dt = safety * min over nodes and action pairs of 1 / (sum_i a_ii/dx_i^2 + |b_i|/dx_i)``
    which in one dimension is ``safety * dx^2 / (sigma^2 + dx |b|)``.
    Time-dependent coefficients are sampled at ``times`` (default: 33 points on [0, T]).
    """
    if any(h <= 0 for h in grid.dx):
        raise GridError("degenerate grid spacing")
    nodes = grid.nodes()
    if times is None:
        times = np.linspace(0.0, m.T, 33) if m.time_dependent else [m.T]
    rate = 0.0
    for t in times:
        b, a = _tables(m, grid, t, nodes)
        rate = max(rate, float(np.max(_rate(b, a, grid.dx))))
    if rate == 0.0:
        return math.inf
    return safety / rate


def _check_cross_monotone(a, dx):
    d = a.shape[-1]
    if d < 2:
        return
    for i in range(d):
        off = sum(np.abs(a[..., i, j]) / (dx[i] * dx[j]) for j in range(d) if j != i)
        if np.any(a[..., i, i] / dx[i] ** 2 < off - 1e-12):
            logger.warning("diffusion matrix is not diagonally dominant on the grid; scheme may lose monotonicity")
            return


class SchemeOperator:
    """Upwind finite-difference operator ``L_h`` for one model on one grid.

    ``table(t, v)`` returns ``L_h`` at every (node, u, v) for the grid
    function ``v`` (grid-shaped). Coefficient tables are cached when the
    model does not depend on ``t``.
    """

    def __init__(self, m: GameModel, grid: SpatialGrid):
        if grid.d != m.d:
            raise GridError(f"grid dimension {grid.d} does not match model dimension {m.d}")
        self.m = m
        self.grid = grid
        self.nodes = grid.nodes()
        self._cached = None
        self._interior = [~grid.boundary_mask(i).ravel() for i in range(grid.d)]

    def coefficients(self, t):
        if self._cached is not None:
            return self._cached
        b, a = _tables(self.m, self.grid, t, self.nodes)
        _check_cross_monotone(a, self.grid.dx)
        bp = np.maximum(b, 0.0)
        bm = np.minimum(b, 0.0)
        diag = [a[..., i, i] * self._interior[i][:, None, None] for i in range(self.grid.d)]
        cross = {}
        for i in range(self.grid.d):
            for j in range(i + 1, self.grid.d):
                mask = (self._interior[i] & self._interior[j])[:, None, None]
                cross[i, j] = (np.maximum(a[..., i, j], 0.0) * mask, np.minimum(a[..., i, j], 0.0) * mask)
        rate = _rate(b, a, self.grid.dx)
        out = (bp, bm, diag, cross, rate)
        if not self.m.time_dependent:
            self._cached = out
        return out

    def differences(self, v):
        """Forward, backward and second differences (flattened), boundary-closed."""
        g = self.grid
        d = g.d
        fwd, bwd, sec = [], [], []
        for i, h in enumerate(g.dx):
            df = np.zeros_like(v)
            db = np.zeros_like(v)
            lo = [slice(None)] * d
            hi = [slice(None)] * d
            lo[i] = slice(None, -1)
            hi[i] = slice(1, None)
            diff = (v[tuple(hi)] - v[tuple(lo)]) / h
            df[tuple(lo)] = diff
            db[tuple(hi)] = diff
            fwd.append(df.ravel())
            bwd.append(db.ravel())
            sec.append(((df - db) / h).ravel())
        cross = {}
        for i in range(d):
            for j in range(i + 1, d):
                cross[i, j] = _cross_stencils(v, i, j, g.dx)
        return fwd, bwd, sec, cross

    def table(self, t, v, u_index=None):
        """``(L_h, rate)``; with ``u_index`` only that U row is computed (shape ``(N, 1, |V|)``)."""
        bp, bm, diag, cross_coef, rate = self.coefficients(t)
        if u_index is not None:
            sl = slice(u_index, u_index + 1)
            bp, bm, rate = bp[:, sl], bm[:, sl], rate[:, sl]
            diag = [a[:, sl] for a in diag]
            cross_coef = {k: (cp[:, sl], cm[:, sl]) for k, (cp, cm) in cross_coef.items()}
        fwd, bwd, sec, cross = self.differences(v)
        L = np.zeros(bp.shape[:-1])
        for i in range(self.grid.d):
            L += bp[..., i] * fwd[i][:, None, None] + bm[..., i] * bwd[i][:, None, None]
            L += 0.5 * diag[i] * sec[i][:, None, None]
        for (i, j), (cp, cm) in cross_coef.items():
            dplus, dminus = cross[i, j]
            L += cp * dplus[:, None, None] + cm * dminus[:, None, None]
        return L, rate


def _cross_stencils(v, i, j, dx):
    """Kushner stencils for ``v_ij`` (positive- and negative-coefficient forms), zero on the boundary."""
    d = v.ndim
    pad = np.pad(v, 1, mode="edge")

    def sh(si, sj):
        idx = []
        for a in range(d):
            off = si if a == i else sj if a == j else 0
            idx.append(slice(1 + off, pad.shape[a] - 1 + off))
        return pad[tuple(idx)]

    c = v
    axis = sh(1, 0) + sh(-1, 0) + sh(0, 1) + sh(0, -1)
    scale = 2 * dx[i] * dx[j]
    plus = (sh(1, 1) + sh(-1, -1) - axis + 2 * c) / scale
    minus = -(sh(1, -1) + sh(-1, 1) - axis + 2 * c) / scale
    return plus.ravel(), minus.ravel()


def time_levels(s, T, dt_max, align=1):
    """Uniform levels from ``s`` to ``T`` with step ``<= dt_max`` and a step count divisible by ``align``."""
    if not s < T:
        raise GridError(f"start time {s} must be < T={T}")
    n = max(1, math.ceil((T - s) / dt_max - 1e-12)) if math.isfinite(dt_max) else 1
    n = align * math.ceil(n / align)
    return np.linspace(s, T, n + 1)


def solve_lower_isaacs(m: GameModel, grid: SpatialGrid, s: float = 0.0, *, dt=None, align: int = 1,
                       safety: float = 0.9) -> ValueFunction:
    """Solve ``-v_t - H^-(t, x, v_x, v_xx) = 0``, ``v(T) = g`` backward from ``T`` to ``s``.

    The step count is rounded up to a multiple of ``align`` so that coarser
    uniform time grids on ``[s, T]`` land on solver levels.
    """
    op = SchemeOperator(m, grid)
    if dt is None:
        dt = cfl_step(m, grid, safety, times=None if m.time_dependent else [m.T])
    times = time_levels(s, m.T, dt, align)
    values = np.empty((len(times),) + grid.shape)
    v = m.payoff(op.nodes).reshape(grid.shape)
    values[-1] = v
    for n in range(len(times) - 2, -1, -1):
        h = times[n + 1] - times[n]
        L, rate = op.table(times[n + 1], v)
        if h * float(np.max(rate)) > 1.0 + 1e-12:
            raise CFLError(f"step {h:.3g} violates the monotonicity bound {1.0 / np.max(rate):.3g} at t={times[n + 1]:.6g}")
        v = v + h * sup_inf(L)[0].reshape(grid.shape)
        if not np.all(np.isfinite(v)):
            raise NonFiniteValueError(f"non-finite value at time level {n} (t={times[n]:.6g})", time_level=n)
        values[n] = v
    return ValueFunction(grid, times, values, model=m, dt=float(times[1] - times[0]))


def query_value(vf: ValueFunction, t, x):
    """``(value, DerivativePair)`` at a single space-time point."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    val = float(vf.value(t, x[None, :])[0])
    p, M = vf.derivatives(t, x[None, :])
    return val, DerivativePair(p[0], M[0])
