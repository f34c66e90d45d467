"""Running operator ``L = b.p + 1/2 Tr(sigma sigma^T M)`` and lower/upper Hamiltonians.

sup/inf are exhaustive over the finite action grids; ties go to the lowest
grid index.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import GameModel


@dataclass(frozen=True)
class DerivativePair:
    p: np.ndarray
    M: np.ndarray

    def __post_init__(self):
        p = np.atleast_1d(np.asarray(self.p, dtype=float))
        M = np.atleast_2d(np.asarray(self.M, dtype=float))
        if M.shape != (len(p), len(p)):
            raise ValueError(f"M must be {len(p)}x{len(p)}, got {M.shape}")
        if not np.allclose(M, M.T, rtol=1e-12, atol=1e-12):
            raise ValueError("M must be symmetric")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "M", M)


@dataclass(frozen=True)
class HamiltonianResult:
    value: float
    best_u: int
    worst_v_given_best_u: int


def operator_table(m: GameModel, t, X, p, M):
    """``L`` at every (point, u, v): shape ``(N, |U|, |V|)``.

    ``X`` is ``(N, d)``, ``p`` is ``(N, d)`` and ``M`` is ``(N, d, d)``.
    """
    X = np.asarray(X, dtype=float).reshape(-1, m.d)
    p = np.asarray(p, dtype=float).reshape(-1, m.d)
    M = np.asarray(M, dtype=float).reshape(-1, m.d, m.d)
    b, s = m.coefficient_tables(t, X)
    return _apply(b, s, p, M)


def _apply(b, s, p, M):
    a = np.einsum("nuvik,nuvjk->nuvij", s, s)
    return np.einsum("nuvi,ni->nuv", b, p) + 0.5 * np.einsum("nuvij,nij->nuv", a, M)


def running_cost_operator(m: GameModel, t, x, u, v, dp: DerivativePair) -> float:
    """``L(t, x, u, v, p, M)``; ``u`` and ``v`` are grid indices or action vectors."""
    u_pt = m.U.points[u] if isinstance(u, (int, np.integer)) else np.atleast_1d(np.asarray(u, dtype=float))
    v_pt = m.V.points[v] if isinstance(v, (int, np.integer)) else np.atleast_1d(np.asarray(v, dtype=float))
    b, s = m.coefficients_at_points(t, np.atleast_1d(np.asarray(x, dtype=float)), u_pt, v_pt)
    return float(_apply(b[:, None, None], s[:, None, None], dp.p[None, :], dp.M[None])[0, 0, 0])


def sup_inf(L):
    """Lower Hamiltonian over the last two axes: value, best u, worst v given best u."""
    inner = L.min(axis=-1)
    best_u = inner.argmax(axis=-1)
    value = np.take_along_axis(inner, best_u[..., None], axis=-1)[..., 0]
    worst_v = np.take_along_axis(L, best_u[..., None, None], axis=-2)[..., 0, :].argmin(axis=-1)
    return value, best_u, worst_v


def inf_sup(L):
    """Upper Hamiltonian: value, best u against the minimising v, minimising v."""
    inner = L.max(axis=-2)
    best_v = inner.argmin(axis=-1)
    value = np.take_along_axis(inner, best_v[..., None], axis=-1)[..., 0]
    best_u = np.take_along_axis(L, best_v[..., None, None], axis=-1)[..., 0].argmax(axis=-1)
    return value, best_u, best_v


def _single(m, t, x, dp):
    return operator_table(m, t, np.atleast_1d(np.asarray(x, dtype=float))[None, :], dp.p[None, :], dp.M[None])[0]


def lower_hamiltonian(m: GameModel, t, x, dp: DerivativePair) -> HamiltonianResult:
    value, bu, wv = sup_inf(_single(m, t, x, dp))
    return HamiltonianResult(float(value), int(bu), int(wv))


def upper_hamiltonian(m: GameModel, t, x, dp: DerivativePair) -> HamiltonianResult:
    """``inf_v sup_u L``; ``best_u`` is the maximiser against the chosen ``v``."""
    value, bu, bv = inf_sup(_single(m, t, x, dp))
    return HamiltonianResult(float(value), int(bu), int(bv))


def counter_response(m: GameModel, t, x, dp: DerivativePair, u) -> int:
    """Index of the ``v`` minimising ``L`` against the fixed action ``u``."""
    iu = u if isinstance(u, (int, np.integer)) else m.U.nearest(u)
    return int(np.argmin(_single(m, t, x, dp)[iu]))


def isaacs_gap(m: GameModel, sample_cloud) -> float:
    """Largest ``H+ - H-`` over ``(t, x, DerivativePair)`` samples."""
    cloud = list(sample_cloud)
    if not cloud:
        raise ValueError("sample cloud is empty")
    gap = 0.0
    for t, x, dp in cloud:
        L = _single(m, t, x, dp)
        gap = max(gap, float(inf_sup(L)[0] - sup_inf(L)[0]))
    return gap
