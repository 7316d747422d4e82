"""Command-line runner: config handling, serialization, exit codes,
end-to-end output files."""

import json
import os

import numpy as np
import pytest

from fracparab import cli


def test_load_config_defaults_and_overrides(tmp_path):
    cfg = cli.load_config(None, "forward", None)
    assert cfg["experiment"] == "forward"
    assert cfg["N_x_levels"] == [32, 48, 64]
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"experiment": "forward", "N_t": 32,
                             "N_x_levels": [32]}))
    cfg = cli.load_config(str(p), None, 7)
    assert cfg["N_t"] == 32 and cfg["seed"] == 7


def test_load_config_errors(tmp_path):
    with pytest.raises(cli.ConfigError):
        cli.load_config(None, "bogus", None)
    with pytest.raises(cli.ConfigError):
        cli.load_config(str(tmp_path / "missing.json"), "forward", None)
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"experiment": "forward", "nope": 1}))
    with pytest.raises(cli.ConfigError):
        cli.load_config(str(p), None, None)
    p.write_text("[1, 2]")
    with pytest.raises(cli.ConfigError):
        cli.load_config(str(p), "forward", None)


def test_config_hash_stable_and_order_free():
    a = cli.config_hash({"x": 1, "y": [2, 3]})
    b = cli.config_hash({"y": [2, 3], "x": 1})
    assert a == b and len(a) == 64


def test_fmt_and_render_csv():
    assert cli.fmt(3) == "3"
    assert cli.fmt(True) == "1"
    assert cli.fmt(0.1) == f"{0.1:.17g}"
    out = cli.render_csv("a,b", [[1, 0.5], ["x", 2]])
    lines = out.splitlines()
    assert lines[0] == "a,b" and lines[1] == "1,0.5" and lines[2] == "x,2"
    assert out.endswith("\n")


def test_atomic_write(tmp_path):
    p = tmp_path / "out.csv"
    cli.atomic_write(str(p), "hello\n")
    assert p.read_text() == "hello\n"
    assert not [f for f in os.listdir(tmp_path) if f.startswith(".tmp-")]


def test_main_config_error_exit_code(tmp_path, capsys):
    missing = str(tmp_path / "nope.json")
    assert cli.main(["--config", missing, "--out", str(tmp_path)]) == 2
    assert "config error" in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"experiment": "bogus"}))
    assert cli.main(["--config", str(bad), "--out", str(tmp_path)]) == 2


def test_run_numerical_failure_exit_code(tmp_path, monkeypatch):
    def boom(cfg):
        raise FloatingPointError("synthetic blow-up")
    monkeypatch.setitem(cli.RUNNERS, "forward", boom)
    cfg = cli.load_config(None, "forward", None)
    assert cli.run(cfg, str(tmp_path)) == 3
    diag = json.loads((tmp_path / "failure.json").read_text())
    assert "synthetic blow-up" in diag["error"]


def test_run_check_failure_exit_code(tmp_path, monkeypatch):
    def fail(cfg):
        return ({"convergence.csv": ("a,b", [[1, 2]])},
                [cli.check("bad", 1.0, 0.5, False)])
    monkeypatch.setitem(cli.RUNNERS, "forward", fail)
    cfg = cli.load_config(None, "forward", None)
    assert cli.run(cfg, str(tmp_path)) == 1


def test_forward_experiment_end_to_end(tmp_path):
    cfg = cli.load_config(None, "forward", None)
    cfg["N_x_levels"] = [32]
    cfg["N_t"] = 32
    assert cli.run(cfg, str(tmp_path)) == 0
    csv = (tmp_path / "convergence.csv").read_text().splitlines()
    assert csv[0] == "experiment,n,N_x,N_t,s,h,dt,metric,value"
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["experiment"] == "forward"
    assert all(c["pass"] for c in summary["checks"])
    # deterministic rerun writes byte-identical tables
    rerun = tmp_path / "again"
    assert cli.run(cfg, str(rerun)) == 0
    assert ((tmp_path / "convergence.csv").read_bytes()
            == (rerun / "convergence.csv").read_bytes())


def test_main_threads_flag_sets_env(tmp_path, monkeypatch):
    monkeypatch.setitem(cli.RUNNERS, "forward",
                        lambda cfg: ({}, [cli.check("ok", 0.0, 1.0, True)]))
    monkeypatch.delenv("OMP_NUM_THREADS", raising=False)
    rc = cli.main(["--experiment", "forward", "--threads", "2",
                   "--out", str(tmp_path)])
    assert rc == 0
    assert os.environ["OMP_NUM_THREADS"] == "2"
