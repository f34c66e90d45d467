"""Euler-Maruyama simulation, Monte Carlo payoffs and the exit/gauge diagnostics."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from . import rng
from .errors import GridError, NonFiniteValueError
from .model import GameModel
from .solver import ValueFunction
from .strategy import ControlSource


@dataclass
class Path:
    times: np.ndarray
    states: np.ndarray
    u: np.ndarray
    v: np.ndarray
    normals: np.ndarray
    seed: int
    payoff: float


@dataclass(frozen=True)
class PayoffEstimate:
    mean: float
    stderr: float
    n_paths: int
    seed: int
    dt_sim: float


def _estimate(samples, seed, dt_sim):
    n = len(samples)
    mean = math.fsum(samples) / n
    var = math.fsum((samples - mean) ** 2) / (n - 1)
    return PayoffEstimate(mean, math.sqrt(var / n), n, int(seed), float(dt_sim))


def _n_steps(s, t, dt_sim, sources):
    n = (t - s) / dt_sim
    if abs(n - round(n)) > 1e-9 * max(1.0, n):
        raise GridError(f"dt_sim={dt_sim} does not divide [{s}, {t}]")
    n = int(round(n))
    for src in sources:
        for gt in src.grid_times():
            if s - 1e-12 < gt < t + 1e-12:
                j = (gt - s) / dt_sim
                if abs(j - round(j)) > 1e-7:
                    raise GridError(f"dt_sim={dt_sim} does not divide the strategy grid (time {gt})")
    return n


def _volatility_term(sigma, Z):
    out = np.zeros(sigma.shape[:2])
    for j in range(sigma.shape[2]):
        out += sigma[:, :, j] * Z[:, j][:, None]
    return out


def _run(m, u_source, v_source, x0, s, t_end, dt_sim, seed, path_ids, record=False, monitor=None):
    """Vectorised Euler paths for ``path_ids``; returns terminal states (and a record when asked)."""
    n = _n_steps(s, t_end, dt_sim, (u_source, v_source))
    P = len(path_ids)
    x = np.tile(np.asarray(x0, dtype=float).reshape(1, m.d), (P, 1))
    u_play = u_source.player(m, path_ids, s)
    v_play = v_source.player(m, path_ids, s)
    sq = math.sqrt(dt_sim)
    noise_dims = np.arange(m.d_prime)[None, :]
    ids = np.asarray(path_ids)[:, None]
    rec = {"states": [x.copy()], "u": [], "v": [], "normals": []} if record else None
    for j in range(n):
        t = s + j * dt_sim
        ui = np.broadcast_to(np.asarray(u_play(t, dt_sim, x), dtype=np.int64), (P,))
        vi = np.broadcast_to(np.asarray(v_play(t, dt_sim, x, ui), dtype=np.int64), (P,))
        b, sig = m.coefficients_at(t, x, ui, vi)
        Z = rng.normals(seed, rng.NORMALS, ids, j, noise_dims)
        x = x + b * dt_sim + _volatility_term(sig, Z) * sq
        if not np.all(np.isfinite(x)):
            raise NonFiniteValueError(f"non-finite state at step {j}", step=j)
        if monitor is not None:
            monitor(x)
        if record:
            rec["states"].append(x.copy())
            rec["u"].append(ui.copy())
            rec["v"].append(vi.copy())
            rec["normals"].append(Z.copy())
    return x, rec


def simulate_path(m: GameModel, u_source: ControlSource, v_source: ControlSource, dt_sim: float, seed: int,
                  x0, s: float = 0.0) -> Path:
    """One Euler path from ``(s, x0)`` to ``T``; it is path 0 of ``mc_payoff`` with the same seed."""
    xT, rec = _run(m, u_source, v_source, x0, s, m.T, dt_sim, seed, np.array([0]), record=True)
    n = len(rec["u"])
    return Path(
        times=s + dt_sim * np.arange(n + 1),
        states=np.concatenate(rec["states"]),
        u=np.concatenate(rec["u"]) if n else np.empty(0, dtype=np.int64),
        v=np.concatenate(rec["v"]) if n else np.empty(0, dtype=np.int64),
        normals=np.concatenate(rec["normals"]) if n else np.empty((0, m.d_prime)),
        seed=int(seed),
        payoff=float(m.payoff(xT)[0]),
    )


def _chunks(n_paths, chunk):
    return [np.arange(a, min(a + chunk, n_paths)) for a in range(0, n_paths, chunk)]


def _map_chunks(fn, n_paths, n_jobs, chunk):
    parts = _chunks(n_paths, chunk)
    if n_jobs == 1 or len(parts) == 1:
        return np.concatenate([fn(p) for p in parts])
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return np.concatenate(list(pool.map(fn, parts)))


def payoff_samples(m, u_source, v_source, n_paths, dt_sim, seed, x0, s=0.0, n_jobs=1, chunk=20000):
    """Per-path terminal payoffs, in path order (path ``i`` uses keys ``(seed, i, step)``)."""
    def fn(ids):
        xT, _ = _run(m, u_source, v_source, x0, s, m.T, dt_sim, seed, ids)
        return m.payoff(xT)

    return _map_chunks(fn, n_paths, n_jobs, chunk)


def mc_payoff(m: GameModel, u_source, v_source, n_paths: int, dt_sim: float, seed: int, x0,
              s: float = 0.0, n_jobs: int = 1, chunk: int = 20000) -> PayoffEstimate:
    """Monte Carlo estimate of ``E[g(X_T)]``; bit-identical for any ``n_jobs``/``chunk``."""
    if n_paths < 2:
        raise ValueError("n_paths must be >= 2")
    samples = payoff_samples(m, u_source, v_source, n_paths, dt_sim, seed, x0, s, n_jobs, chunk)
    return _estimate(samples, seed, dt_sim)


def normal_tail(z):
    """``P(N(0,1) >= z)`` via the complementary error function."""
    return 0.5 * erfc(z / math.sqrt(2.0))


def gauge_tail_bound(t_minus_r: float, eps: float, C: float, d: int) -> float:
    """``4 d P(N(0,1) >= eps / (4 C sqrt(t - r)))``: bound on leaving a box of half-width ``eps/2``."""
    if not (t_minus_r > 0 and eps > 0 and C > 0) or int(d) != d or d < 1:
        raise ValueError("t_minus_r, eps, C must be positive and d a positive integer")
    return 4 * d * normal_tail(eps / (4 * C * math.sqrt(t_minus_r)))


def gauge_function(t: float, eps: float, C: float, C_prime: float, sup_norm: float) -> float:
    """``2 ||v|| C' / t * P(N(0,1) >= eps / (4 C sqrt(t)))``; vanishes as ``t -> 0``."""
    if not (t > 0 and eps > 0 and C > 0 and C_prime > 0 and sup_norm > 0):
        raise ValueError("all arguments must be positive")
    return 2 * sup_norm * C_prime / t * normal_tail(eps / (4 * C * math.sqrt(t)))


def binomial_stderr(p, n):
    return math.sqrt(max(p * (1 - p), 0.0) / n)


def exit_frequency(m: GameModel, u_source, v_source, r: float, t: float, eps: float, n_paths: int, seed: int,
                   x0, C: float, n_sub: int = 64, n_jobs: int = 1, chunk: int = 20000) -> float:
    """Fraction of paths started at ``(r, x0)`` whose sup-norm excursion reaches ``eps/2`` on ``[r, t]``.

    The excursion is monitored at ``n_sub`` Euler steps.  Requires
    ``t - r <= min(eps/2, eps/(4C))`` with ``C`` a bound on the coefficients.
    """
    if not t > r:
        raise ValueError("need t > r")
    if t - r > min(eps / 2, eps / (4 * C)) * (1 + 1e-12):
        raise ValueError(f"t - r = {t - r} exceeds min(eps/2, eps/(4C)) = {min(eps / 2, eps / (4 * C))}")
    origin = np.asarray(x0, dtype=float).reshape(1, m.d)
    dt_sim = (t - r) / n_sub

    def fn(ids):
        hit = np.zeros(len(ids), dtype=bool)

        def monitor(x):
            hit[:] |= np.max(np.abs(x - origin), axis=1) >= eps / 2

        _run(m, u_source, v_source, x0, r, t, dt_sim, seed, ids, monitor=monitor)
        return hit.astype(float)

    hits = _map_chunks(fn, n_paths, n_jobs, chunk)
    return math.fsum(hits) / n_paths


def martingale_defect(w: ValueFunction, m: GameModel, alpha, v_source, r: float, t: float, n_paths: int,
                      seed: int, x0, dt_sim: float = None, n_jobs: int = 1, chunk: int = 20000) -> PayoffEstimate:
    """Estimate of ``E[w(t, X_t) - w(r, X_r)]`` from ``(r, x0)``; ``alpha`` holds its ``r``-snapshot action.

    An asymptotic sub-solution predicts a mean ``>= -(t - r) * phi(t - r)``.
    """
    if not r < t:
        raise ValueError("need r < t")
    dt_sim = dt_sim or (t - r) / 32
    w0 = float(w.value(r, np.asarray(x0, dtype=float).reshape(1, -1))[0])

    def fn(ids):
        xt, _ = _run(m, alpha, v_source, x0, r, t, dt_sim, seed, ids)
        return w.value(t, xt) - w0

    samples = _map_chunks(fn, n_paths, n_jobs, chunk)
    return _estimate(samples, seed, dt_sim)
