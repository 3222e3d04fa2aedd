import json
import subprocess
import sys

import pytest

from qfreq import cli


def _cfg(tmp_path, name, body):
    p = tmp_path / f"{name}.json"
    p.write_text(json.dumps(body))
    return p


def _run(tmp_path, sub, body, *extra):
    cfg = _cfg(tmp_path, sub, body)
    out = tmp_path / f"out_{sub}"
    code = cli.run([sub, "--config", str(cfg), "--out", str(out), *extra])
    rep = json.loads((out / f"{sub}.json").read_text()) if (out / f"{sub}.json").exists() else None
    return code, out, rep


def test_classify1d(tmp_path):
    body = {"mesh": {"kind": "interval", "n": 201}, "left": {"values": [2, -2], "sign": -1}, "right": {"values": [1, -1], "sign": 1}, "solver": {"tol": 1e-10, "max_sweeps": 20000}}
    code, out, rep = _run(tmp_path, "classify1d", body)
    assert code == 0 and rep["passed"]
    assert abs(rep["singular_point"] - 1 / 3) < 0.03
    assert (out / "field.txt").exists()
    assert rep["config"]["left"]["values"] == [2, -2] and len(rep["config_digest"]) == 64


def test_homogeneous_and_frequency(tmp_path):
    spec = {"alpha": 2, "c_cos": 1.0, "c_sin": 0.0, "vector": [0.7071067811865476, -0.7071067811865476]}
    code, _, rep = _run(tmp_path, "homogeneous", {"spec": spec, "mesh": {"kind": "disk", "n": 65}})
    assert code == 0
    code, out, rep = _run(tmp_path, "frequency", {"spec": spec, "mesh": {"kind": "disk", "n": 65}, "radii": [0.3, 0.5, 0.7], "smoothed": True, "I0": 2.0})
    assert code == 0 and rep["passed"]
    assert all(abs(v - 2) < 0.1 for v in rep["I"])
    assert (out / "profile.csv").exists() and (out / "smoothed.csv").exists()


def test_solve_then_weiss(tmp_path):
    code, out, rep = _run(tmp_path, "solve", {"mesh": {"kind": "disk", "n": 33}, "trace": {"kind": "perturbed_model", "eps": 0.1}})
    assert code == 0 and rep["converged"]
    field = out / "field.txt"
    assert field.exists() and (out / "history.csv").exists()
    code, _, rep = _run(tmp_path, "weiss", {"field": str(field), "I0": 1.0, "radii": [0.3, 0.5, 0.7]})
    assert code == 0
    # a solved, non-homogeneous field cannot have W identically zero
    code, _, rep = _run(tmp_path, "weiss", {"field": str(field), "I0": 1.0, "radii": [0.3, 0.5, 0.7], "expect_zero": 1e-12})
    assert code == 1 and not rep["passed"]


def test_relative_paths_follow_config(tmp_path):
    code, out, _ = _run(tmp_path, "solve", {"mesh": {"kind": "disk", "n": 17}})
    assert code == 0
    sub = tmp_path / "cfgdir"
    sub.mkdir()
    (sub / "f.txt").write_bytes((out / "field.txt").read_bytes())
    code, _, _ = _run(sub, "weiss", {"field": "f.txt", "I0": 1.0, "radii": [0.3, 0.5, 0.7]})
    assert code == 0


def test_epi(tmp_path):
    code, out, rep = _run(tmp_path, "epi", {"eps": 0.1})
    assert code == 0 and rep["delta_measured"] > 0.01
    code, _, rep = _run(tmp_path, "epi", {"partition": str(out / "partition.json")})
    assert code == 0
    code, _, rep = _run(tmp_path, "epi", {"eps": 0.1, "delta_target": 5.0})
    assert code == 1


def test_whitney(tmp_path):
    base = {"current": {"kind": "bump", "n": 129}, "params": {"Ce": 1e8, "Ch": 3e4}, "j_max": 11}
    code, out, rep = _run(tmp_path, "whitney", dict(base, marks=[[3.5, 3.5]]))
    assert code == 0 and rep["father_rule_violations"] == 0
    assert (out / "forest.csv").exists() and (out / "gamma_mask.txt").exists()
    code, _, rep = _run(tmp_path, "whitney", dict(base, marks=[[0.0, 0.0]]))
    assert code == 1 and rep["fine_cm"]["n_violations"] > 0
    code, _, _ = _run(tmp_path, "whitney", {"current": {"kind": "flat", "n": 129}, "params": {"Ce": 1, "Ch": 1}, "j_max": 10})
    assert code == 0


def test_selftest_subset(tmp_path, capsys):
    code, _, rep = _run(tmp_path, "selftest", {"only": [1, 7]})
    assert code == 0
    lines = [l for l in capsys.readouterr().out.splitlines() if l.startswith("[")]
    assert len(lines) == 2 and all(l.startswith("[PASS]") for l in lines)


def test_determinism(tmp_path):
    body = {"mesh": {"kind": "disk", "n": 33}, "solver": {"restarts": 2}}
    cfg = _cfg(tmp_path, "s", body)
    for name in ("a", "b"):
        assert cli.run(["solve", "--config", str(cfg), "--out", str(tmp_path / name), "--seed", "7"]) == 0
    assert (tmp_path / "a" / "field.txt").read_bytes() == (tmp_path / "b" / "field.txt").read_bytes()
    ra = json.loads((tmp_path / "a" / "solve.json").read_text())
    rb = json.loads((tmp_path / "b" / "solve.json").read_text())
    assert ra == rb and ra["config"]["seed"] == 7


def test_usage_errors(tmp_path, capsys):
    assert cli.run([]) == 2
    assert cli.run(["bogus", "--config", "x"]) == 2
    assert cli.run(["solve"]) == 2
    missing = tmp_path / "nope.json"
    assert cli.run(["solve", "--config", str(missing)]) == 2
    assert str(missing) in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.run(["solve", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    for sub, body in [
        ("solve", {"mesh": {"kind": "hexagon"}}),
        ("weiss", {"model": True}),
        ("weiss", {"field": "absent.txt", "I0": 1.0}),
        ("whitney", {"params": {"Ce": -1, "Ch": 1}}),
        ("whitney", {"params": {"Ce": 1, "Ch": 1, "colour": 3}}),
        ("homogeneous", {"spec": {"alpha": 0, "vector": [1, 0]}}),
        ("classify1d", {"mesh": {"kind": "disk", "n": 17}, "left": {"values": [1]}, "right": {"values": [0]}}),
    ]:
        code, _, _ = _run(tmp_path, sub, body)
        assert code == 2, (sub, body)
    err = capsys.readouterr().err
    assert err.count("qfreq: error") >= 7 and "Traceback" not in err


def test_console_script_help():
    r = subprocess.run([sys.executable, "-m", "qfreq.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "classify1d" in r.stdout


def test_config_out_is_relative_to_config(tmp_path, monkeypatch):
    sub = tmp_path / "cfg"
    sub.mkdir()
    cfg = _cfg(sub, "s", {"mesh": {"kind": "disk", "n": 17}, "out": "res"})
    monkeypatch.chdir(tmp_path)
    assert cli.run(["solve", "--config", str(cfg)]) == 0
    assert (sub / "res" / "solve.json").exists()
    assert cli.run(["solve", "--config", str(cfg), "--out", "here"]) == 0
    assert (tmp_path / "here" / "solve.json").exists()
