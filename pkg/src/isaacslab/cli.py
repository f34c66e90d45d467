"""Command-line front end.

Exit codes: 0 when every check passed, 1 when an invariant or verification
check failed, 2 for usage, config and input errors.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (CFLError, ConfigError, EvaluationError, ExpressionSyntaxError, GridError, IsaacsLabError,
                     LatticeError, StageError)
from .experiments import (ExperimentConfig, default_out_dir, emit_report, estimate_delta, load_experiment_config,
                          run_convergence_study, run_saddle_check, solve_for)
from .lattice import build_lattice, lattice_lower_value, lattice_upper_value, write_lattice_csv
from .model import audit_assumptions
from .simulator import mc_payoff
from .strategy import (ConstantSource, RandomSource, counter_response_source, hamiltonian_feedback_source,
                       synthesize_markov_counter_strategy, synthesize_markov_strategy)

USAGE_ERRORS = (ConfigError, ExpressionSyntaxError, GridError, LatticeError, CFLError, OSError)


def _ints(text):
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _floats(text):
    try:
        return [float(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _config(args, **extra) -> ExperimentConfig:
    over = {"dx": args.dx, "seed": args.seed, "n_paths": args.paths, "dt_sim": args.dt_sim, "out_dir": args.out}
    if args.domain is not None:
        over["domain"] = tuple(args.domain)
    if getattr(args, "meshes", None):
        over["pi_steps"] = args.meshes
    elif getattr(args, "pi_steps", None):
        over["pi_steps"] = [args.pi_steps]
    if getattr(args, "points", None):
        over["points"] = args.points
    over.update(extra)
    return load_experiment_config(args.model, **over)


def _out(cfg):
    path = Path(cfg.out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _dump(path, obj):
    obj = {"version": __version__, **obj}
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=float)


def cmd_solve(args):
    cfg = _config(args)
    vf = solve_for(cfg)
    out = _out(cfg)
    vf.to_csv(out / "value.csv", every=args.every)
    at = vf.value(vf.s, np.asarray(cfg.points))
    _dump(out / "meta.json", {"kind": "solve", "config": cfg.describe(), "dt": vf.dt, "levels": len(vf.times),
                              "boundary": vf.boundary_mode,
                              "values": {" ".join(map(repr, p)): float(v) for p, v in zip(cfg.points, at)}})
    for p, v in zip(cfg.points, at):
        print(f"V({vf.s:g}, {list(p)}) = {v:.10g}")
    # discrete maximum principle on the solve itself
    g = cfg.model.payoff(cfg.grid.nodes())
    ok = vf.values.min() >= g.min() - 1e-12 and vf.values.max() <= g.max() + 1e-12
    if not ok:
        print("maximum principle violated", file=sys.stderr)
    return 0 if ok else 1


def cmd_synthesize(args):
    cfg = _config(args)
    vf = solve_for(cfg)
    out = _out(cfg)
    pi = cfg.time_grid(cfg.pi_steps[-1])
    synthesize_markov_strategy(vf, pi).to_csv(out / "strategy.csv")
    synthesize_markov_counter_strategy(vf, pi).to_csv(out / "counter_strategy.csv")
    _dump(out / "meta.json", {"kind": "synthesize", "config": cfg.describe(), "pi_steps": pi.n,
                              "nodes": cfg.grid.nodes().tolist()})
    print(f"wrote {out / 'strategy.csv'} and {out / 'counter_strategy.csv'}")
    return 0


def _source(spec, side, vf, m, alpha, gamma, seed):
    if spec == "markov":
        return alpha if side == "U" else gamma
    if spec == "feedback":
        return hamiltonian_feedback_source(vf, m) if side == "U" else counter_response_source(vf, m)
    if spec == "random":
        return RandomSource(seed + (1 if side == "U" else 2), side)
    if spec.startswith("const:"):
        idx = int(spec.split(":", 1)[1])
        n = len(m.U if side == "U" else m.V)
        if not 0 <= idx < n:
            raise ConfigError(f"constant {side} index {idx} outside 0..{n - 1}")
        return ConstantSource(idx, side)
    raise ConfigError(f"unknown source {spec!r} (use markov, feedback, random or const:K)")


def cmd_simulate(args):
    cfg = _config(args)
    vf = solve_for(cfg)
    m = cfg.model
    pi = cfg.time_grid(cfg.pi_steps[-1])
    alpha = synthesize_markov_strategy(vf, pi)
    gamma = synthesize_markov_counter_strategy(vf, pi)
    u = _source(args.u, "U", vf, m, alpha, gamma, cfg.seed)
    v = _source(args.v, "V", vf, m, alpha, gamma, cfg.seed)
    out = _out(cfg)
    rows = []
    for x in cfg.points:
        est = mc_payoff(m, u, v, cfg.n_paths, cfg.dt_sim, cfg.seed, x, n_jobs=args.jobs)
        rows.append((x, est))
        print(f"x={list(x)}: E[g] = {est.mean:.6f} +- {est.stderr:.6f}")
    with open(out / "estimates.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "u_source", "v_source", "mean", "stderr", "n_paths", "seed", "dt_sim"])
        for x, e in rows:
            w.writerow([" ".join(map(repr, x)), args.u, args.v, repr(e.mean), repr(e.stderr), e.n_paths, e.seed,
                        repr(e.dt_sim)])
    _dump(out / "meta.json", {"kind": "simulate", "config": cfg.describe(), "u": u.describe(), "v": v.describe(),
                              "pi_steps": pi.n})
    bound = float(np.max(np.abs(m.payoff(cfg.grid.nodes()))))
    return 0 if all(abs(e.mean) <= bound + 1e-12 for _, e in rows) else 1


def cmd_converge(args):
    cfg = _config(args)
    res = run_convergence_study(cfg)
    files = emit_report(res, cfg.out_dir)
    for h in res.table.meshes():
        print(f"mesh {h:.6g}: max gap {res.table.max_gap(h):.6g}")
    if args.eps is not None:
        print(f"delta estimate for eps={args.eps}: {estimate_delta(res.table, args.eps, cfg.radius)}")
    print("wrote " + ", ".join(str(f) for f in files))
    if res.violations:
        print(f"{len(res.violations)} sandwich violation(s) beyond tol={res.tol:.3g}", file=sys.stderr)
        return 1
    return 0


def cmd_saddle(args):
    cfg = _config(args)
    vf = solve_for(cfg)
    eps = args.eps
    if eps is None:
        conv = run_convergence_study(cfg, vf)
        eps = conv.table.max_gap(conv.table.meshes()[-1])
        print(f"eps from the measured gap at the finest mesh: {eps:.6g}")
    rep = run_saddle_check(cfg, eps, vf=vf)
    files = emit_report(rep, cfg.out_dir)
    for e in rep.entries:
        mark = {True: "ok", False: "FAIL", None: "--"}[e.passed]
        print(f"{mark:4s} x={list(e.x)} {e.side}:{e.source} diff={e.diff:+.5f} threshold={e.threshold:.5f}")
    if rep.note:
        print(rep.note)
    print("wrote " + ", ".join(str(f) for f in files))
    return 1 if rep.passed is False else 0


def cmd_audit(args):
    cfg = _config(args)
    rep = audit_assumptions(cfg.model, args.samples, args.K, cfg.seed)
    out = _out(cfg)
    _dump(out / "audit.json", asdict(rep))
    for k, v in asdict(rep).items():
        print(f"{k}: {v}")
    return 0 if all(rep.continuity_flags.values()) else 1


def cmd_oracle(args):
    cfg = _config(args)
    m = cfg.model
    lo, hi = cfg.domain
    n_x = int(round((hi - lo) / cfg.dx)) + 1
    L = build_lattice(m, args.steps, lo, hi, n_x, mode=args.mode)
    lower, upper = lattice_lower_value(L), lattice_upper_value(L)
    out = _out(cfg)
    write_lattice_csv(out / "lattice_lower.csv", L, lower, every=args.every)
    write_lattice_csv(out / "lattice_upper.csv", L, upper, every=args.every)
    vals = {}
    for p in cfg.points:
        j = int(np.argmin(np.abs(L.x - p[0])))
        vals[repr(p[0])] = {"node": float(L.x[j]), "lower": float(lower[0][j]), "upper": float(upper[0][j])}
        print(f"x={L.x[j]:g}: lower {lower[0][j]:.10g} upper {upper[0][j]:.10g}")
    _dump(out / "meta.json", {"kind": "oracle", "config": cfg.describe(), "h": L.h, "n_steps": L.n_steps,
                              "n_x": n_x, "mode": args.mode, "values": vals})
    ordered = all(np.all(a <= b + 1e-12) for a, b in zip(lower, upper))
    return 0 if ordered else 1


def build_parser():
    p = argparse.ArgumentParser(prog="isaacslab", description="Stochastic differential game toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--model", required=True, help="TOML model file (may also hold an [experiment] table)")
        sp.add_argument("--out", default=None, help=f"output directory (default ${'{'}ISAACSLAB_OUT{'}'} or {default_out_dir()})")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--paths", type=int, default=None, help="Monte Carlo paths")
        sp.add_argument("--dt-sim", type=float, default=None, dest="dt_sim")
        sp.add_argument("--dx", type=float, default=None)
        sp.add_argument("--domain", type=float, nargs=2, default=None, metavar=("MIN", "MAX"))
        sp.add_argument("--points", type=_floats, default=None, help="comma-separated reporting points (d = 1)")
        return sp

    s = common(sub.add_parser("solve", help="solve the lower Isaacs equation"))
    s.add_argument("--every", type=int, default=1, help="write every k-th time level")
    s.set_defaults(func=cmd_solve)

    s = common(sub.add_parser("synthesize", help="write strategy and counter-strategy tables"))
    s.add_argument("--pi-steps", type=int, default=None, dest="pi_steps")
    s.set_defaults(func=cmd_synthesize)

    s = common(sub.add_parser("simulate", help="Monte Carlo payoff of a source pairing"))
    s.add_argument("--pi-steps", type=int, default=None, dest="pi_steps")
    s.add_argument("--u", default="markov", help="markov | feedback | random | const:K")
    s.add_argument("--v", default="markov", help="markov | feedback | random | const:K")
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_simulate)

    s = common(sub.add_parser("converge", help="restricted values and gaps per mesh"))
    s.add_argument("--meshes", type=_ints, default=None, help="comma-separated interval counts, e.g. 4,8,16,32")
    s.add_argument("--eps", type=float, default=None, help="also report the largest mesh with gaps <= eps")
    s.set_defaults(func=cmd_converge)

    s = common(sub.add_parser("saddle", help="Monte Carlo 2 eps-saddle check"))
    s.add_argument("--meshes", type=_ints, default=None)
    s.add_argument("--pi-steps", type=int, default=None, dest="pi_steps")
    s.add_argument("--eps", type=float, default=None, help="default: measured gap at the finest mesh")
    s.set_defaults(func=cmd_saddle)

    s = common(sub.add_parser("audit", help="sampled Lipschitz/growth constants"))
    s.add_argument("--samples", type=int, default=3000)
    s.add_argument("--K", type=float, default=2.0)
    s.set_defaults(func=cmd_audit)

    s = common(sub.add_parser("oracle", help="lattice Markov-chain oracle values"))
    s.add_argument("--steps", type=int, required=True, help="micro-steps over [0, T]")
    s.add_argument("--mode", choices=("trinomial", "drift_upwind"), default="trinomial")
    s.add_argument("--every", type=int, default=1)
    s.set_defaults(func=cmd_oracle)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        return args.func(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2 if isinstance(exc.cause, USAGE_ERRORS) else 1
    except USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (IsaacsLabError, EvaluationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
