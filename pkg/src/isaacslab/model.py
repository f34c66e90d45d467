"""Game models: coefficients, action grids, config loading and assumption audits."""
from __future__ import annotations

import itertools
import sys
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .errors import ConfigError, EvaluationError, ExpressionSyntaxError
from .expr import Expr, evaluate, parse_expression, to_source, variables

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


@dataclass(frozen=True, eq=False)
class ActionGrid:
    """Finite, ordered set of action vectors; the order is the tie-breaking order."""

    points: np.ndarray
    label: str = "U"

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or len(pts) == 0:
            raise ConfigError(f"{self.label} grid must be a non-empty list of action vectors")
        if len({tuple(p) for p in pts}) != len(pts):
            raise ConfigError(f"{self.label} grid points must be pairwise distinct")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_ranges(cls, ranges, label="U"):
        """Product grid of ``numpy.linspace(min, max, count)`` per component.

        The first component varies slowest.
        """
        axes = []
        for r in ranges:
            lo, hi, n = float(r["min"]), float(r["max"]), int(r["count"])
            if n < 1:
                raise ConfigError(f"{label} grid count must be >= 1")
            if n > 1 and not lo < hi:
                raise ConfigError(f"{label} grid needs min < max when count > 1")
            axes.append(np.linspace(lo, hi, n) if n > 1 else np.array([lo]))
        return cls(np.array(list(itertools.product(*axes)), dtype=float), label)

    def __len__(self):
        return len(self.points)

    @property
    def dim(self):
        return self.points.shape[1]

    def nearest(self, a):
        """Index of the grid point nearest to ``a`` (lowest index on ties)."""
        a = np.atleast_1d(np.asarray(a, dtype=float))
        return int(np.argmin(np.sum((self.points - a) ** 2, axis=1)))


@dataclass(frozen=True, eq=False)
class GameModel:
    """Controlled SDE ``dX = b dt + sigma dW`` with terminal payoff ``g``.

    ``b`` has ``d`` entries, ``sigma`` is a ``d x d_prime`` nested tuple and
    ``g`` may reference ``x`` variables only.
    """

    d: int
    d_prime: int
    T: float
    b: tuple
    sigma: tuple
    g: Expr
    U: ActionGrid
    V: ActionGrid
    name: str = "model"
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.d < 1 or self.d_prime < 1:
            raise ConfigError("d and d_prime must be >= 1")
        if not self.T > 0:
            raise ConfigError("horizon T must be positive")
        if len(self.b) != self.d:
            raise ConfigError(f"b has {len(self.b)} components, expected d={self.d}")
        if len(self.sigma) != self.d or any(len(row) != self.d_prime for row in self.sigma):
            raise ConfigError(f"sigma must be a {self.d}x{self.d_prime} matrix")
        allowed = self.declared_variables()
        for what, e in self._named_exprs():
            extra = variables(e) - (allowed if what != "g" else self.x_names)
            if extra:
                raise ConfigError(f"{what} references undeclared variable(s) {sorted(extra)}")

    def _named_exprs(self):
        for i, e in enumerate(self.b):
            yield f"b[{i}]", e
        for i, row in enumerate(self.sigma):
            for j, e in enumerate(row):
                yield f"sigma[{i}][{j}]", e
        yield "g", self.g

    @property
    def x_names(self):
        return frozenset(f"x{i + 1}" for i in range(self.d))

    def declared_variables(self):
        names = {"t"} | set(self.x_names)
        names |= {f"u{i + 1}" for i in range(self.U.dim)}
        names |= {f"v{i + 1}" for i in range(self.V.dim)}
        return frozenset(names)

    def _refs(self, prefix):
        refs = frozenset()
        for e in list(self.b) + [s for row in self.sigma for s in row]:
            refs |= {n for n in variables(e) if n[0] == prefix}
        return refs

    @property
    def time_dependent(self):
        return bool(self._refs("t"))

    @property
    def depends_on_u(self):
        return bool(self._refs("u"))

    @property
    def depends_on_v(self):
        return bool(self._refs("v"))

    def _env(self, t, X, u_pts, v_pts):
        env = {"t": float(t)}
        for i in range(self.d):
            env[f"x{i + 1}"] = X[..., i]
        for i in range(self.U.dim):
            env[f"u{i + 1}"] = u_pts[..., i]
        for i in range(self.V.dim):
            env[f"v{i + 1}"] = v_pts[..., i]
        return env

    def _coefficients(self, env, shape):
        b = np.empty(shape + (self.d,))
        s = np.empty(shape + (self.d, self.d_prime))
        for i, e in enumerate(self.b):
            b[..., i] = evaluate(e, env)
        for i, row in enumerate(self.sigma):
            for j, e in enumerate(row):
                s[..., i, j] = evaluate(e, env)
        return b, s

    def coefficient_tables(self, t, X):
        """Drift and volatility at every (node, u, v) combination.

        ``X`` has shape ``(N, d)``. Returns ``b`` of shape ``(N, |U|, |V|, d)``
        and ``sigma`` of shape ``(N, |U|, |V|, d, d_prime)``.
        """
        X = np.asarray(X, dtype=float).reshape(-1, self.d)
        key = None
        if not self.time_dependent:
            key = (X.shape, X.tobytes())
            hit = self._cache.get("tables")
            if hit is not None and hit[0] == key:
                return hit[1]
        shape = (len(X), len(self.U), len(self.V))
        env = self._env(t, X[:, None, None, :], self.U.points[None, :, None, :], self.V.points[None, None, :, :])
        out = self._coefficients(env, shape)
        if key is not None:
            self._cache["tables"] = (key, out)
        return out

    def coefficients_at(self, t, X, u_idx, v_idx):
        """Drift ``(P, d)`` and volatility ``(P, d, d_prime)`` for per-row action indices."""
        X = np.asarray(X, dtype=float).reshape(-1, self.d)
        u_pts = self.U.points[np.broadcast_to(u_idx, len(X))]
        v_pts = self.V.points[np.broadcast_to(v_idx, len(X))]
        return self._coefficients(self._env(t, X, u_pts, v_pts), (len(X),))

    def coefficients_at_points(self, t, X, u_pts, v_pts):
        """Drift and volatility for explicit action vectors, one row per state."""
        X = np.asarray(X, dtype=float).reshape(-1, self.d)
        u_pts = np.broadcast_to(np.asarray(u_pts, dtype=float).reshape(-1, self.U.dim), (len(X), self.U.dim))
        v_pts = np.broadcast_to(np.asarray(v_pts, dtype=float).reshape(-1, self.V.dim), (len(X), self.V.dim))
        return self._coefficients(self._env(t, X, u_pts, v_pts), (len(X),))

    def payoff(self, X):
        """Terminal payoff ``g`` at the rows of ``X``."""
        X = np.asarray(X, dtype=float).reshape(-1, self.d)
        env = {f"x{i + 1}": X[:, i] for i in range(self.d)}
        return np.broadcast_to(np.asarray(evaluate(self.g, env), dtype=float), (len(X),)).copy()

    def with_payoff(self, g):
        """Copy of the model with a different terminal payoff."""
        if isinstance(g, str):
            g = parse_expression(g)
        return GameModel(self.d, self.d_prime, self.T, self.b, self.sigma, g, self.U, self.V, self.name)

    def to_config(self):
        """Serialise back to the config format (action grids as explicit points)."""
        q = lambda e: '"' + to_source(e) + '"'
        lines = ["[dynamics]", f"d = {self.d}", f"d_prime = {self.d_prime}", f"T = {self.T!r}"]
        lines.append("b = [" + ", ".join(q(e) for e in self.b) + "]")
        lines.append("sigma = [" + ", ".join("[" + ", ".join(q(e) for e in row) + "]" for row in self.sigma) + "]")
        lines.append(f"g = {q(self.g)}")
        lines.append("")
        lines.append("[actions]")
        for key, grid in (("u_points", self.U), ("v_points", self.V)):
            lines.append(f"{key} = [" + ", ".join("[" + ", ".join(repr(float(c)) for c in p) + "]" for p in grid.points) + "]")
        return "\n".join(lines) + "\n"


def _parse(src, where):
    if not isinstance(src, str):
        raise ConfigError(f"{where} must be an expression string, got {src!r}")
    try:
        return parse_expression(src)
    except ExpressionSyntaxError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _grid(actions, key, label):
    points_key = key.replace("_grid", "_points")
    if points_key in actions:
        return ActionGrid(np.asarray(actions[points_key], dtype=float), label)
    if key not in actions:
        raise ConfigError(f"missing field [actions].{key}")
    spec = actions[key]
    ranges = [spec] if isinstance(spec, dict) else list(spec)
    for r in ranges:
        missing = {"min", "max", "count"} - set(r)
        if missing:
            raise ConfigError(f"[actions].{key} is missing {sorted(missing)}")
    return ActionGrid.from_ranges(ranges, label)


def load_model(config_text: str, name: str = "model") -> GameModel:
    """Build a validated :class:`GameModel` from config text.

    Format (TOML)::

        [dynamics]
        d = 1
        d_prime = 1          # optional, defaults to d
        T = 1.0
        b = ["u1 + v1"]
        sigma = [["1"]]
        g = "cos(x1)"

        [actions]
        u_grid = {min = -1, max = 1, count = 3}     # or a list, one table per component
        v_grid = {min = -1, max = 1, count = 3}

    ``u_points`` / ``v_points`` (explicit lists of action vectors) may replace
    the ``*_grid`` range declarations.
    """
    try:
        cfg = tomllib.loads(config_text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    dyn = cfg.get("dynamics")
    if dyn is None:
        raise ConfigError("missing section [dynamics]")
    actions = cfg.get("actions")
    if actions is None:
        raise ConfigError("missing section [actions]")
    for key in ("d", "T", "b", "sigma", "g"):
        if key not in dyn:
            raise ConfigError(f"missing field [dynamics].{key}")
    d = int(dyn["d"])
    d_prime = int(dyn.get("d_prime", d))
    b_src = dyn["b"]
    if isinstance(b_src, str):
        b_src = [b_src]
    sigma_src = dyn["sigma"]
    if isinstance(sigma_src, str):
        sigma_src = [[sigma_src]]
    elif sigma_src and all(isinstance(s, str) for s in sigma_src):
        sigma_src = [sigma_src]
    if len(b_src) != d:
        raise ConfigError(f"b has {len(b_src)} components, expected d={d}")
    if len(sigma_src) != d or any(len(row) != d_prime for row in sigma_src):
        raise ConfigError(f"sigma must be a {d}x{d_prime} matrix")
    b = tuple(_parse(s, f"b[{i}]") for i, s in enumerate(b_src))
    sigma = tuple(tuple(_parse(s, f"sigma[{i}][{j}]") for j, s in enumerate(row)) for i, row in enumerate(sigma_src))
    g = _parse(dyn["g"], "g")
    U = _grid(actions, "u_grid", "U")
    V = _grid(actions, "v_grid", "V")
    return GameModel(d, d_prime, float(dyn["T"]), b, sigma, g, U, V, name=cfg.get("name", name))


def make_model(b, sigma, g, U, V, T=1.0, d=None, d_prime=None, name="model"):
    """Programmatic constructor taking expression strings and action point lists."""
    b = [b] if isinstance(b, str) else list(b)
    d = d or len(b)
    if isinstance(sigma, str):
        sigma = [[sigma]]
    elif sigma and all(isinstance(s, str) for s in sigma):
        sigma = [list(sigma)]
    d_prime = d_prime or len(sigma[0])
    U = U if isinstance(U, ActionGrid) else ActionGrid(np.asarray(U, dtype=float), "U")
    V = V if isinstance(V, ActionGrid) else ActionGrid(np.asarray(V, dtype=float), "V")
    return GameModel(
        d, d_prime, float(T),
        tuple(_parse(s, f"b[{i}]") for i, s in enumerate(b)),
        tuple(tuple(_parse(s, "sigma") for s in row) for row in sigma),
        _parse(g, "g"), U, V, name=name,
    )


@dataclass(frozen=True)
class AuditReport:
    K: float
    lipschitz_estimate: float
    growth_constant: float
    continuity_flags: dict
    samples_used: int
    seed: int
    bound_on_box: float = 0.0


def _ball(seed, tag, n_idx, d, K, radius_fraction=None):
    """Deterministic points in the Euclidean ball of radius ``K`` (sample-index keyed)."""
    idx = np.asarray(n_idx)
    z = rng.normals(seed, rng.AUDIT, tag, idx[:, None], np.arange(d)[None, :])
    z /= np.maximum(np.linalg.norm(z, axis=1, keepdims=True), 1e-300)
    if radius_fraction is None:
        radius_fraction = rng.uniforms(seed, rng.AUDIT, tag + 1, idx) ** (1.0 / d)
    return K * np.asarray(radius_fraction)[:, None] * z


def audit_assumptions(m: GameModel, n_samples: int, K: float, seed: int = 0) -> AuditReport:
    """Sampled estimates of the local Lipschitz constant ``L(K)`` and growth constant ``C``.

    Sample ``i`` depends only on ``(seed, i)``, so estimates for a prefix of
    the sample stream never exceed estimates for the full stream.  Every third
    sample pair sits on the sphere ``|x| = K`` with a close partner, which is
    where polynomial coefficients attain their local Lipschitz supremum.
    """
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    if not K > 0:
        raise ValueError("K must be positive")
    idx = np.arange(n_samples)
    kind = idx % 3
    x = _ball(seed, 10, idx, m.d, K)
    x = np.where((kind == 2)[:, None], _ball(seed, 10, idx, m.d, K, np.ones(n_samples)), x)
    far = _ball(seed, 20, idx, m.d, K)
    step = 1e-3 * K * (rng.uniforms(seed, rng.AUDIT, 30, idx) + 0.01)
    direction = _ball(seed, 40, idx, m.d, 1.0, np.ones(n_samples))
    near = x - step[:, None] * direction
    near_norm = np.linalg.norm(near, axis=1, keepdims=True)
    near = np.where(near_norm > K, near * (K / near_norm), near)
    y = np.where((kind == 0)[:, None], far, near)

    t = m.T * rng.uniforms(seed, rng.AUDIT, 50, idx)
    ui = rng.integers(seed, len(m.U), rng.AUDIT, 60, idx)
    vi = rng.integers(seed, len(m.V), rng.AUDIT, 70, idx)

    def coeffs(points):
        out_b = np.empty((n_samples, m.d))
        out_s = np.empty((n_samples, m.d, m.d_prime))
        # t varies per sample; evaluate grouped by nothing, via per-sample env
        env = {"t": t}
        for i in range(m.d):
            env[f"x{i + 1}"] = points[:, i]
        for i in range(m.U.dim):
            env[f"u{i + 1}"] = m.U.points[ui, i]
        for i in range(m.V.dim):
            env[f"v{i + 1}"] = m.V.points[vi, i]
        for i, e in enumerate(m.b):
            out_b[:, i] = evaluate(e, env)
        for i, row in enumerate(m.sigma):
            for j, e in enumerate(row):
                out_s[:, i, j] = evaluate(e, env)
        return out_b, out_s

    bx, sx = coeffs(x)
    by, sy = coeffs(y)
    dist = np.linalg.norm(x - y, axis=1)
    diff = np.linalg.norm(bx - by, axis=1) + np.linalg.norm((sx - sy).reshape(n_samples, -1), axis=1)
    ok = dist > 0
    lip = float(np.max(diff[ok] / dist[ok])) if np.any(ok) else 0.0

    size_x = np.linalg.norm(bx, axis=1) + np.linalg.norm(sx.reshape(n_samples, -1), axis=1)
    size_y = np.linalg.norm(by, axis=1) + np.linalg.norm(sy.reshape(n_samples, -1), axis=1)
    growth = max(
        float(np.max(size_x / (1 + np.linalg.norm(x, axis=1)))),
        float(np.max(size_y / (1 + np.linalg.norm(y, axis=1)))),
    )
    bound = max(
        float(np.max(np.abs(np.concatenate([bx, by])))),
        float(np.max(np.abs(np.concatenate([sx, sy])))),
    )

    flags = {}
    delta = 1e-7
    for what, e in m._named_exprs():
        env = {"t": t, **{f"x{i + 1}": x[:, i] for i in range(m.d)}}
        env.update({f"u{i + 1}": m.U.points[ui, i] for i in range(m.U.dim)})
        env.update({f"v{i + 1}": m.V.points[vi, i] for i in range(m.V.dim)})
        base = np.broadcast_to(evaluate(e, env), (n_samples,))
        shifted = {k: (v + delta * (1 + np.abs(v)) if k[0] in "tx" else v) for k, v in env.items()}
        moved = np.broadcast_to(evaluate(e, shifted), (n_samples,))
        flags[what] = bool(np.all(np.abs(moved - base) <= 1e-3 * np.maximum(1.0, np.abs(base))))
    return AuditReport(float(K), lip, growth, flags, int(n_samples), int(seed), bound)
