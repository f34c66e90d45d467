"""Brute-force Markov-chain oracle for one-dimensional games.

The state lives on a uniform lattice and moves one node left, right or
stays per micro-step.  Trinomial probabilities match drift and variance;
``drift_upwind`` sends the drift mass to the signed neighbour so that
sigma = 0 models stay valid.  Boundary nodes reflect: mass that would leave
the lattice stays put.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import LatticeError
from .model import GameModel
from .strategy import TimeGrid


@dataclass(eq=False)
class LatticeGame:
    model: GameModel
    h: float
    x: np.ndarray
    # (n_steps, n_x, |U|, |V|, 3): probabilities of moving to left, stay, right
    probs: np.ndarray
    terminal: np.ndarray
    mode: str
    s: float = 0.0

    @property
    def n_steps(self):
        return self.probs.shape[0]

    @property
    def dx(self):
        return float(self.x[1] - self.x[0])

    @property
    def times(self):
        return self.s + self.h * np.arange(self.n_steps + 1)

    def node(self, x0):
        j = int(np.argmin(np.abs(self.x - float(np.ravel(x0)[0]))))
        if abs(self.x[j] - float(np.ravel(x0)[0])) > 1e-9 * max(1.0, self.dx):
            raise LatticeError(f"x0={x0} is not a lattice node")
        return j


def build_lattice(m: GameModel, n_steps: int, x_min: float, x_max: float, n_x: int,
                  mode: str = "trinomial", s: float = 0.0) -> LatticeGame:
    """Materialise the transition table over ``n_steps`` micro-steps of length ``(T - s)/n_steps``."""
    if m.d != 1:
        raise LatticeError("lattices are one-dimensional")
    if mode not in ("trinomial", "drift_upwind"):
        raise LatticeError(f"unknown lattice mode {mode!r}")
    if n_steps < 1 or n_x < 2 or not x_max > x_min:
        raise LatticeError("need n_steps >= 1, n_x >= 2 and x_max > x_min")
    h = (m.T - s) / n_steps
    x = np.linspace(x_min, x_max, n_x)
    dx = x[1] - x[0]
    probs = np.empty((n_steps, n_x, len(m.U), len(m.V), 3))
    for j in range(n_steps):
        b, sig = m.coefficient_tables(s + j * h, x[:, None])
        b = b[..., 0]
        var = np.sum(sig[..., 0, :] ** 2, axis=-1)
        diff = var * h / dx ** 2
        if mode == "trinomial":
            up = 0.5 * (diff + b * h / dx)
            dn = 0.5 * (diff - b * h / dx)
        else:
            up = 0.5 * diff + np.maximum(b, 0.0) * h / dx
            dn = 0.5 * diff + np.maximum(-b, 0.0) * h / dx
        stay = 1.0 - up - dn
        P = np.stack([dn, stay, up], axis=-1)
        bad = np.argwhere((P < -1e-12) | (P > 1 + 1e-12))
        if len(bad):
            node, iu, iv, _ = bad[0]
            hint = _suggest_dx(b, var, h, mode)
            raise LatticeError(
                f"transition probability out of [0, 1] at step {j}, node {node}, u={iu}, v={iv}: "
                f"{P[node, iu, iv].tolist()}; {hint}")
        probs[j] = np.clip(P, 0.0, 1.0)
    probs[:, 0, :, :, 1] += probs[:, 0, :, :, 0]
    probs[:, 0, :, :, 0] = 0.0
    probs[:, -1, :, :, 1] += probs[:, -1, :, :, 2]
    probs[:, -1, :, :, 2] = 0.0
    return LatticeGame(m, h, x, probs, m.payoff(x[:, None]), mode, s)


def _suggest_dx(b, var, h, mode):
    bmax, vmax = float(np.max(np.abs(b))), float(np.max(var))
    if mode == "trinomial" and vmax > 0:
        # need sigma^2 h / dx^2 <= 1 and |b| dx <= sigma^2 at every entry
        lo = np.sqrt(vmax * h)
        hi = float(np.min(var[np.abs(b) > 0] / np.abs(b[np.abs(b) > 0]))) if bmax > 0 else np.inf
        if lo <= hi:
            return f"choose dx in [{lo:.4g}, {hi:.4g}]"
        return "no dx works for this h; shrink h or use mode='drift_upwind'"
    if mode == "trinomial":
        return "zero diffusion: use mode='drift_upwind'"
    dx_min = 0.5 * (bmax * h + np.sqrt((bmax * h) ** 2 + 4 * vmax * h))
    return f"choose dx >= {dx_min:.4g} (need sigma^2 h / dx^2 + |b| h / dx <= 1)"


def _expect(P, W):
    """``E[W(next)]`` per (node, u, v) for one micro-step."""
    left = np.concatenate([W[:1], W[:-1]])
    right = np.concatenate([W[1:], W[-1:]])
    return P[..., 0] * left[:, None, None] + P[..., 1] * W[:, None, None] + P[..., 2] * right[:, None, None]


def lattice_lower_value(L: LatticeGame):
    """Values ``V_j`` for ``j = 0..n_steps`` with ``V_j = max_u min_v E[V_{j+1}]``."""
    out = [L.terminal.copy()]
    for j in range(L.n_steps - 1, -1, -1):
        out.append(_expect(L.probs[j], out[-1]).min(axis=2).max(axis=1))
    return out[::-1]


def lattice_upper_value(L: LatticeGame):
    """Values with the order swapped: ``min_v max_u``."""
    out = [L.terminal.copy()]
    for j in range(L.n_steps - 1, -1, -1):
        out.append(_expect(L.probs[j], out[-1]).max(axis=1).min(axis=1))
    return out[::-1]


def _micro_index(L, t):
    j = (t - L.s) / L.h
    if abs(j - round(j)) > 1e-9 * max(1.0, abs(j)):
        raise LatticeError(f"time grid point {t} does not fall on a micro-step")
    return int(round(j))


def lattice_grid_restricted_lower(L: LatticeGame, pi: TimeGrid, x0=None):
    """Exact discrete value when u is frozen per macro-interval as a function of the snapshot node.

    Returns the value array at ``pi.s`` over all nodes, or the scalar at ``x0``.
    """
    if abs(pi.s - L.s) > 1e-9 or abs(pi.T - L.model.T) > 1e-9:
        raise LatticeError("time grid must span the lattice horizon")
    idx = [_micro_index(L, t) for t in pi.times]
    nu = len(L.model.U)
    R = L.terminal.copy()
    for k in range(pi.n, 0, -1):
        W = np.tile(R, (nu, 1))
        for j in range(idx[k] - 1, idx[k - 1] - 1, -1):
            new = np.empty_like(W)
            for a in range(nu):
                new[a] = _expect(L.probs[j], W[a])[:, a, :].min(axis=1)
            W = new
        R = W.max(axis=0)
    if x0 is None:
        return R
    return float(R[L.node(x0)])


def write_lattice_csv(path, L: LatticeGame, values, every=1):
    """Same layout as the solver's value CSV: ``t, x1, value``."""
    times = L.times
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x1", "value"])
        for j in range(0, len(values), every):
            for xi, vi in zip(L.x, values[j]):
                w.writerow([repr(float(times[j])), repr(float(xi)), repr(float(vi))])
