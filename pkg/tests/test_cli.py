import json
import os

import pytest

from isaacslab.cli import main

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CFG = os.path.join(ROOT, "configs")


def run(*args):
    return main([str(a) for a in args])


def test_solve(tmp_path, capsys):
    assert run("solve", "--model", f"{CFG}/cancellation.toml", "--out", tmp_path, "--every", 500) == 0
    assert (tmp_path / "value.csv").read_text().startswith("t,x1,value\n")
    assert "V(0, [0.0])" in capsys.readouterr().out


def test_synthesize(tmp_path):
    assert run("synthesize", "--model", f"{CFG}/cancellation.toml", "--out", tmp_path, "--pi-steps", 4) == 0
    assert (tmp_path / "strategy.csv").exists() and (tmp_path / "counter_strategy.csv").exists()


def test_simulate(tmp_path):
    assert run("simulate", "--model", f"{CFG}/cancellation.toml", "--out", tmp_path, "--pi-steps", 4,
               "--paths", 200, "--v", "random", "--seed", 3) == 0
    first = (tmp_path / "estimates.csv").read_bytes()
    run("simulate", "--model", f"{CFG}/cancellation.toml", "--out", tmp_path, "--pi-steps", 4,
        "--paths", 200, "--v", "random", "--seed", 3, "--jobs", 4)
    assert (tmp_path / "estimates.csv").read_bytes() == first
    assert run("simulate", "--model", f"{CFG}/cancellation.toml", "--out", tmp_path, "--u", "const:9") == 2


def test_converge(tmp_path):
    assert run("converge", "--model", f"{CFG}/cancellation.toml", "--out", tmp_path, "--meshes", "4,8") == 0
    assert {p.name for p in tmp_path.iterdir()} == {"gaps.csv", "gaps.svg", "meta.json"}
    assert run("converge", "--model", f"{CFG}/cancellation.toml", "--out", tmp_path, "--meshes", "8,4") == 2


def test_saddle(tmp_path):
    assert run("saddle", "--model", f"{CFG}/cancellation.toml", "--out", tmp_path, "--meshes", "4,8",
               "--paths", 500, "--eps", 0.05, "--points", "0") == 0
    meta = json.loads((tmp_path / "meta.json").read_text())
    assert meta["passed"] is True and meta["n_paths"] == 500


def test_audit(tmp_path):
    assert run("audit", "--model", f"{CFG}/cancellation.toml", "--out", tmp_path, "--samples", 100) == 0
    assert json.loads((tmp_path / "audit.json").read_text())["lipschitz_estimate"] == 0.0


def test_oracle(tmp_path, capsys):
    assert run("oracle", "--model", f"{CFG}/sign.toml", "--out", tmp_path, "--steps", 1, "--mode",
               "drift_upwind") == 0
    assert "lower -1 upper 1" in capsys.readouterr().out
    assert run("oracle", "--model", f"{CFG}/sign.toml", "--out", tmp_path, "--steps", 1) == 2


def test_env_default_out(tmp_path, monkeypatch):
    monkeypatch.setenv("ISAACSLAB_OUT", str(tmp_path / "env"))
    assert run("audit", "--model", f"{CFG}/drift.toml", "--samples", 30) == 0
    assert (tmp_path / "env" / "audit.json").exists()


def test_usage_errors(tmp_path):
    assert run("nope") == 2
    assert run("solve") == 2
    assert run("solve", "--model", tmp_path / "missing.toml") == 2
    bad = tmp_path / "bad.toml"
    bad.write_text('[dynamics]\nd = 1\nT = 1.0\nb = ["x2"]\nsigma = [["1"]]\ng = "x1"\n[actions]\nu_points=[[0.0]]\nv_points=[[0.0]]\n')
    assert run("solve", "--model", bad, "--out", tmp_path) == 2
