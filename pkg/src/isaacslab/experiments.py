"""Experiment orchestration: convergence study, saddle check and report emission."""
from __future__ import annotations

import csv
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, IsaacsLabError, StageError
from .model import GameModel, load_model
from .restricted import (GapTable, adversary_best_response_value, controller_best_response_value,
                         sandwich_report)
from .simulator import payoff_samples
from .solver import SpatialGrid, ValueFunction, solve_lower_isaacs
from .strategy import (ConstantSource, RandomSource, TimeGrid, counter_response_source,
                       hamiltonian_feedback_source, synthesize_markov_counter_strategy,
                       synthesize_markov_strategy)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

OUT_ENV = "ISAACSLAB_OUT"


def default_out_dir():
    return os.environ.get(OUT_ENV, "isaacslab_out")


@dataclass
class ExperimentConfig:
    """Everything a convergence or saddle run needs.

    ``pi_steps`` lists the number of uniform intervals per tested time grid,
    so meshes are ``(T - s) / n`` and must strictly decrease.
    """

    model: GameModel
    domain: tuple = (-6.0, 6.0)
    dx: float = 1 / 16
    pi_steps: tuple = (4, 8, 16, 32)
    points: tuple = ((-1.0,), (0.0,), (1.0,))
    n_paths: int = 10000
    dt_sim: float = None
    seed: int = 0
    out_dir: str = None
    tol: float = None
    radius: float = math.inf
    n_jobs: int = 1
    model_path: str = None

    def __post_init__(self):
        self.pi_steps = tuple(int(n) for n in self.pi_steps)
        if not self.pi_steps:
            raise ConfigError("mesh sequence is empty")
        if any(n < 1 for n in self.pi_steps) or any(b <= a for a, b in zip(self.pi_steps, self.pi_steps[1:])):
            raise ConfigError("mesh sequence must be strictly decreasing (pi_steps strictly increasing)")
        lo, hi = (float(c) for c in self.domain)
        if not hi > lo:
            raise ConfigError("domain must have max > min")
        self.domain = (lo, hi)
        pts = np.asarray(self.points, dtype=float).reshape(-1, self.model.d)
        centre, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        if np.any(np.abs(pts - centre) > 0.5 * half + 1e-12):
            raise ConfigError(f"reporting points must lie in the inner half of the domain [{centre - half / 2}, {centre + half / 2}]")
        self.points = tuple(tuple(float(c) for c in p) for p in pts)
        if self.n_paths < 2:
            raise ConfigError("n_paths must be >= 2")
        if self.dt_sim is None:
            self.dt_sim = self.model.T / (2 * self.align)
        self.out_dir = self.out_dir or default_out_dir()

    @property
    def align(self):
        return math.lcm(*self.pi_steps)

    @property
    def grid(self):
        return SpatialGrid.uniform(self.domain[0], self.domain[1], self.dx, self.model.d)

    def time_grid(self, n):
        return TimeGrid.uniform(0.0, self.model.T, n)

    def describe(self):
        return {
            "model": self.model.to_config(), "model_path": self.model_path, "domain": list(self.domain),
            "dx": self.dx, "pi_steps": list(self.pi_steps), "points": [list(p) for p in self.points],
            "n_paths": self.n_paths, "dt_sim": self.dt_sim, "seed": self.seed, "tol": self.tol,
            "radius": None if math.isinf(self.radius) else self.radius,
        }


def load_experiment_config(path, **overrides) -> ExperimentConfig:
    """Read an ``[experiment]`` table; the model is inline or named by ``experiment.model``."""
    path = Path(path)
    try:
        text = path.read_text()
        raw = tomllib.loads(text)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    exp = dict(raw.get("experiment", {}))
    model_ref = exp.pop("model", None)
    if model_ref is not None:
        model_path = (path.parent / model_ref)
        try:
            model = load_model(model_path.read_text(), name=model_path.stem)
        except OSError as exc:
            raise ConfigError(f"cannot read model {model_path}: {exc}") from exc
    else:
        model, model_path = load_model(text, name=path.stem), path
    known = {"domain", "dx", "pi_steps", "points", "n_paths", "dt_sim", "seed", "out_dir", "tol", "radius", "n_jobs"}
    unknown = set(exp) - known
    if unknown:
        raise ConfigError(f"unknown [experiment] keys: {sorted(unknown)}")
    exp.update({k: v for k, v in overrides.items() if v is not None})
    if "points" in exp:
        exp["points"] = [p if isinstance(p, (list, tuple)) else [p] for p in exp["points"]]
    return ExperimentConfig(model=model, model_path=str(model_path), **exp)


def solve_for(cfg: ExperimentConfig) -> ValueFunction:
    return solve_lower_isaacs(cfg.model, cfg.grid, align=cfg.align)


def estimate_scheme_error(cfg: ExperimentConfig, vf: ValueFunction = None) -> float:
    """Max over reporting points of ``|V(dx) - V(2 dx)|``, a first-order error proxy."""
    vf = vf or solve_for(cfg)
    coarse = solve_lower_isaacs(cfg.model, SpatialGrid.uniform(cfg.domain[0], cfg.domain[1], 2 * cfg.dx, cfg.model.d))
    pts = np.asarray(cfg.points)
    return float(np.max(np.abs(vf.value(vf.s, pts) - coarse.value(coarse.s, pts))))


@dataclass
class ConvergenceResult:
    table: GapTable
    value_function: ValueFunction
    tol: float
    config: ExperimentConfig
    strategies: dict = field(default_factory=dict)

    @property
    def violations(self):
        return self.table.violations

    def final_gap(self):
        return self.table.max_gap(self.table.meshes()[-1])


def _stage(name, fn, *args):
    try:
        return fn(*args)
    except IsaacsLabError as exc:
        raise StageError(name, exc) from exc


def run_convergence_study(cfg: ExperimentConfig, vf: ValueFunction = None) -> ConvergenceResult:
    """Synthesize both strategies per mesh, compute ``v_pi^-`` and ``v_pi^+`` and tabulate the gaps.

    ``v_pi^+`` needs ``d = 1``; otherwise only the lower side is reported.
    """
    m = cfg.model
    vf = vf or _stage("solve", solve_for, cfg)
    tol = cfg.tol if cfg.tol is not None else _stage("scheme-error", estimate_scheme_error, cfg, vf)
    lowers, uppers, strategies = [], [], {}
    for n in cfg.pi_steps:
        pi = cfg.time_grid(n)
        alpha = _stage("synthesize", synthesize_markov_strategy, vf, pi)
        lowers.append(_stage("restricted-lower", adversary_best_response_value, m, alpha))
        if m.d == 1:
            gamma = _stage("synthesize", synthesize_markov_counter_strategy, vf, pi)
            uppers.append(_stage("restricted-upper", controller_best_response_value, m, gamma))
        else:
            gamma = None
            uppers.append(None)
        strategies[n] = (alpha, gamma)
    table = sandwich_report(vf, lowers, uppers, cfg.points, tol)
    return ConvergenceResult(table, vf, tol, cfg, strategies)


def estimate_delta(table: GapTable, eps: float, radius: float = math.inf):
    """Largest tested mesh whose gaps ``v_pi^+ - v_pi^-`` at points with ``|x| <= radius`` are all ``<= eps``."""
    ok = []
    for mesh in table.meshes():
        rows = [r for r in table.rows if r.mesh == mesh and max(abs(c) for c in r.x) <= radius]
        if rows and all(r.v_pi_plus - r.v_pi_minus <= eps for r in rows):
            ok.append(mesh)
    return max(ok) if ok else None


@dataclass
class BatteryEntry:
    x: tuple
    side: str
    source: str
    mean: float
    diff: float
    diff_stderr: float
    threshold: float
    passed: object


@dataclass
class SaddleRow:
    x: tuple
    base_mean: float
    base_stderr: float
    worst_u_mean: float
    worst_v_mean: float

    @property
    def slack_u(self):
        """Gain available to the u-player by deviating from the saddle pair."""
        return self.worst_u_mean - self.base_mean

    @property
    def slack_v(self):
        """Gain available to the v-player by deviating from the saddle pair."""
        return self.base_mean - self.worst_v_mean


@dataclass
class SaddleReport:
    eps: float
    mesh: float
    rows: list
    entries: list
    meta: dict
    note: str = ""

    @property
    def decided(self):
        return self.eps > 0

    @property
    def passed(self):
        """``True``/``False``, or ``None`` when eps = 0 leaves the check undecided."""
        if not self.decided:
            return None
        return all(e.passed for e in self.entries)

    @property
    def failures(self):
        return [e for e in self.entries if e.passed is False]


def u_battery(m: GameModel, vf: ValueFunction, seed: int):
    return [ConstantSource(i, "U") for i in range(len(m.U))] + [
        RandomSource(seed + 1, "U"), hamiltonian_feedback_source(vf, m)]


def v_battery(m: GameModel, vf: ValueFunction, seed: int):
    return [ConstantSource(i, "V") for i in range(len(m.V))] + [
        RandomSource(seed + 2, "V"), counter_response_source(vf, m)]


def _paired(a, b):
    d = a - b
    n = len(d)
    mean = math.fsum(d) / n
    return mean, math.sqrt(math.fsum((d - mean) ** 2) / (n - 1) / n)


def _name(src):
    return src.name if src.name != "source" else type(src).__name__


def run_saddle_check(cfg: ExperimentConfig, eps: float, pi_steps: int = None, vf: ValueFunction = None) -> SaddleReport:
    """Monte Carlo check of the 2 eps-saddle inequalities at the reporting points with ``|x| <= radius``.

    Every comparison uses common random numbers: deviating and base runs
    share the master seed, and the margin is three paired standard errors.
    """
    if eps < 0:
        raise ConfigError("eps must be >= 0")
    m = cfg.model
    n = pi_steps or cfg.pi_steps[-1]
    vf = vf or solve_for(cfg)
    pi = cfg.time_grid(n)
    alpha = synthesize_markov_strategy(vf, pi)
    gamma = synthesize_markov_counter_strategy(vf, pi)
    us, vs = u_battery(m, vf, cfg.seed), v_battery(m, vf, cfg.seed)
    if not us or not vs:
        raise ConfigError("battery is empty")

    def run(u, v, x):
        return payoff_samples(m, u, v, cfg.n_paths, cfg.dt_sim, cfg.seed, x, n_jobs=cfg.n_jobs)

    rows, entries = [], []
    for x in cfg.points:
        if max(abs(c) for c in x) > cfg.radius:
            continue
        base = run(alpha, gamma, x)
        bmean = math.fsum(base) / len(base)
        bse = math.sqrt(math.fsum((base - bmean) ** 2) / (len(base) - 1) / len(base))
        worst_u, worst_v = -math.inf, math.inf
        for side, battery in (("u", us), ("v", vs)):
            for src in battery:
                dev = run(src, gamma, x) if side == "u" else run(alpha, src, x)
                mean = math.fsum(dev) / len(dev)
                # u deviations should not gain, v deviations should not lose
                diff, se = _paired(dev, base) if side == "u" else _paired(base, dev)
                thr = 2 * eps + 3 * se
                passed = (diff <= thr + 1e-15) if eps > 0 else None
                entries.append(BatteryEntry(x, side, _name(src), mean, diff, se, thr, passed))
                if side == "u":
                    worst_u = max(worst_u, mean)
                else:
                    worst_v = min(worst_v, mean)
        rows.append(SaddleRow(x, bmean, bse, worst_u, worst_v))
    note = "" if eps > 0 else "eps = 0: numerical tolerance dominates, no pass/fail verdict"
    meta = {"eps": eps, "pi_steps": n, "mesh": pi.mesh, "n_paths": cfg.n_paths, "dt_sim": cfg.dt_sim,
            "seed": cfg.seed, "u_battery": [_name(s) for s in us], "v_battery": [_name(s) for s in vs],
            "margin": "2*eps + 3*paired stderr"}
    return SaddleReport(eps, pi.mesh, rows, entries, meta, note)


def _plot_gaps(table: GapTable, path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    meshes = table.meshes()
    gaps = [table.max_gap(h) for h in meshes]
    fig, ax = plt.subplots(figsize=(5, 4))
    finite = [(h, g) for h, g in zip(meshes, gaps) if np.isfinite(g) and g > 0]
    if finite:
        ax.loglog(*zip(*finite), "o-", label="max (v+ - v-)")
    lo = [max(r.gap_lo for r in table.rows if r.mesh == h) for h in meshes]
    if all(v > 0 for v in lo):
        ax.loglog(meshes, lo, "s--", label="max (V_fd - v-)")
    ax.set_xlabel("mesh")
    ax.set_ylabel("gap")
    if ax.get_legend_handles_labels()[0]:
        ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _meta(extra):
    import platform

    base = {"version": __version__, "python": platform.python_version(), "numpy": np.__version__}
    base.update(extra)
    return base


def emit_report(results, out_dir):
    """Write the CSV/JSON/SVG files for a convergence result or a saddle report; returns the paths."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise OSError(f"cannot write to {out}: {exc}") from exc
    written = []
    if isinstance(results, ConvergenceResult):
        results.table.to_csv(out / "gaps.csv")
        _plot_gaps(results.table, out / "gaps.svg")
        meta = _meta({"kind": "convergence", "config": results.config.describe(), "tol": results.tol,
                      "solver": {"dt": results.value_function.dt, "levels": len(results.value_function.times),
                                 "boundary": results.value_function.boundary_mode},
                      "violations": len(results.violations),
                      "max_gap": {repr(h): results.table.max_gap(h) for h in results.table.meshes()}})
        written += [out / "gaps.csv", out / "gaps.svg"]
    elif isinstance(results, SaddleReport):
        with open(out / "saddle.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "side", "source", "mean", "diff", "diff_stderr", "threshold", "passed"])
            for e in results.entries:
                w.writerow([" ".join(repr(c) for c in e.x), e.side, e.source, repr(e.mean), repr(e.diff),
                            repr(e.diff_stderr), repr(e.threshold), "" if e.passed is None else int(e.passed)])
        with open(out / "saddle_summary.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "base_mean", "base_stderr", "worst_u_mean", "worst_v_mean", "slack_u", "slack_v"])
            for r in results.rows:
                w.writerow([" ".join(repr(c) for c in r.x), repr(r.base_mean), repr(r.base_stderr),
                            repr(r.worst_u_mean), repr(r.worst_v_mean), repr(r.slack_u), repr(r.slack_v)])
        meta = _meta({"kind": "saddle", **results.meta, "passed": results.passed, "note": results.note})
        written += [out / "saddle.csv", out / "saddle_summary.csv"]
    else:
        raise TypeError(f"cannot emit {type(results).__name__}")
    with open(out / "meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True, default=float)
    written.append(out / "meta.json")
    return written
