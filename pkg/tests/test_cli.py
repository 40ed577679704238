import csv
import io
import json

import numpy as np
import pytest

from cogsim import cli
from cogsim.analytic import mu1_alg3


def run_cli(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def csv_rows(text):
    lines = [l for l in text.splitlines() if not l.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(lines))))


def test_parse_grid():
    assert cli.parse_grid("0.1:0.3:0.1") == (0.1, 0.2, 0.3)
    assert cli.parse_grid("0.25") == (0.25,)
    assert cli.parse_grid("0,0.5") == (0.0, 0.5)
    for bad in ("0.3:0.1:0.1", "0:1", "a:b:c", "0:1:0"):
        with pytest.raises(cli.ConfigError):
            cli.parse_grid(bad)


def test_region_baseline(capsys):
    code, out, _ = run_cli(capsys, "region", "--spec", "baseline", "--alg", "1,3")
    assert code == 0
    doc = json.loads(out)
    assert doc["config"]["algorithms"] == [1, 3]
    b1, b3 = (np.array(r["boundary"]) for r in doc["regions"])
    assert b1[-1, 0] == pytest.approx(0.2) and b3[-1, 0] == pytest.approx(0.46667, abs=5e-6)
    assert b1[-1, 1] == pytest.approx(0, abs=1e-12)


def test_region_retx_alg5_dominates(capsys):
    code, out, _ = run_cli(capsys, "region", "--spec", "retx", "--alg", "4,5", "--format", "csv")
    assert code == 0
    assert out.startswith("# config: ")
    rows = csv_rows(out)
    r4 = {float(r["r1"]): float(r["r2"]) for r in rows if r["algorithm"] == "4"}
    r5 = [(float(r["r1"]), float(r["r2"]), r["q"]) for r in rows if r["algorithm"] == "5"]
    from cogsim.analytic import region_alg4
    from cogsim.channel import retx_spec
    reg4 = region_alg4(retx_spec())
    gains = [r2 - reg4.r2_max(r1) for r1, r2, _ in r5]
    assert min(gains) >= -1e-12 and max(gains) > 1e-3
    assert all(q != "" for _, _, q in r5) and r4


@pytest.mark.parametrize("argv", [
    ("region", "--alg", ""),
    ("region", "--alg", "2"),
    ("sweep", "--lambda", "1.5"),
    ("sweep", "--lambda", ""),
    ("sweep", "--q", "0:2:0.5", "--alg", "5"),
    ("region", "--format", "xml"),
    ("region", "--spec", "/nonexistent.json"),
    ("simulate", "--lambda", "0.1,0.2"),
    ("sweep", "--horizon", "100", "--warmup", "100"),
])
def test_configuration_errors(capsys, argv):
    code, out, err = run_cli(capsys, *argv)
    assert code == cli.EXIT_CONFIG
    assert "configuration error" in err and out == ""


def test_argparse_usage_error_is_config_error(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["sweep", "--horizon", "many"])
    assert exc.value.code == cli.EXIT_CONFIG


def test_inadmissible_spec_rejected(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"mode": "independent", "admissible": True,
                                "tx1": {"2": 0.2, "3": 0.1, "4": 0.5},
                                "tx2": {"3": 0.6, "4": 0.2}}))
    code, _, err = run_cli(capsys, "validate", "--spec", str(path))
    assert code == cli.EXIT_CONFIG and "admissible" in err


def test_sweep_three_seeds(capsys, tmp_path):
    out = tmp_path / "sweep.csv"
    code, _, _ = run_cli(capsys, "sweep", "--alg", "1", "--lambda", "0.1", "--seed", "1,2,3",
                         "--horizon", "100000", "--out", str(out))
    assert code == 0
    rows = csv_rows(out.read_text())
    assert [r["seed"] for r in rows] == ["1", "2", "3"]
    for r in rows:
        assert float(r["r1"]) == pytest.approx(0.1, abs=0.01)
        assert float(r["r2"]) == pytest.approx(float(r["r2_boundary"]), abs=0.02)
    header = cli.read_header(str(out))
    assert header["seeds"] == [1, 2, 3] and header["channel"]["mode"] == "joint"


def test_sweep_order_is_deterministic_with_pool(capsys, monkeypatch):
    args = ("sweep", "--alg", "3,1", "--lambda", "0.05:0.15:0.05", "--seed", "4,5",
            "--horizon", "20000", "--format", "json")
    monkeypatch.setenv("COGSIM_THREADS", "1")
    _, serial, _ = run_cli(capsys, *args)
    monkeypatch.setenv("COGSIM_THREADS", "3")
    _, pooled, _ = run_cli(capsys, *args)
    a, b = json.loads(serial)["rows"], json.loads(pooled)["rows"]
    assert a == b
    assert [(r["algorithm"], r["lambda1"], r["seed"]) for r in a][:3] == [
        (3, 0.05, 4), (3, 0.05, 5), (3, 0.1, 4)]


def test_bad_thread_count(capsys, monkeypatch):
    monkeypatch.setenv("COGSIM_THREADS", "zero")
    code, _, _ = run_cli(capsys, "region")
    assert code == cli.EXIT_CONFIG


def test_sweep_saturated_primary_matches_boundary(capsys):
    lam = round(0.5 * mu1_alg3(cli.baseline_spec()), 6)
    code, out, _ = run_cli(capsys, "simulate", "--alg", "3", "--lambda", str(lam),
                           "--horizon", "400000", "--seed", "8")
    (row,) = csv_rows(out)
    assert float(row["r2"]) == pytest.approx(float(row["r2_boundary"]), abs=0.01)


def test_alg5_auto_q(capsys):
    code, out, _ = run_cli(capsys, "simulate", "--spec", "retx", "--alg", "5",
                           "--lambda", "0.02", "--horizon", "20000", "--format", "json")
    doc = json.loads(out)
    assert doc["rows"][0]["q"] == 1.0 and doc["config"]["q"] == "auto"


def test_validate_short_horizon_is_insufficient(capsys):
    code, out, _ = run_cli(capsys, "validate", "--horizon", "1000", "--samples", "1000")
    doc = json.loads(out)
    assert code == 0 and doc["status"] == "insufficient"
    statuses = {c["name"]: c["status"] for c in doc["checks"]}
    assert statuses["region_sim_alg1"] == "insufficient"
    assert statuses["chain_closed_forms"] == "pass"
    assert "fail" not in statuses.values()


def test_validate_fails_on_broken_invariant(capsys, monkeypatch):
    from cogsim import protocols

    monkeypatch.setattr(protocols, "check_invariants", lambda state, full=False: ["synthetic"])
    monkeypatch.setenv("COGSIM_THREADS", "1")
    code, out, err = run_cli(capsys, "validate", "--alg", "1", "--horizon", "2000",
                             "--samples", "1000")
    assert code == cli.EXIT_VALIDATION
    assert json.loads(out)["status"] == "fail" and "failed" in err


def test_dominance_command(capsys):
    code, out, _ = run_cli(capsys, "dominance", "--samples", "2000", "--seed", "3")
    doc = json.loads(out)
    assert code == 0 and doc["report"]["violations"] == 0


def test_module_entry_point():
    import subprocess
    import sys
    res = subprocess.run([sys.executable, "-m", "cogsim", "region", "--alg", "1", "--format", "csv"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0 and res.stdout.startswith("# config: ")
