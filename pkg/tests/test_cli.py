import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from conftest import LEDGER_A_COUNTS, LEDGER_A_THETA, MIXED_THETA
from spinrisk.cli import EXIT_CODES, main
from spinrisk.sweep import COMPARE_HEADER, ROBUSTNESS_HEADER, SURFACE_HEADER, THRESHOLD_HEADER


@pytest.fixture
def ledger_file(tmp_path):
    p = tmp_path / "ledger.txt"
    p.write_text("\n".join(map(str, LEDGER_A_COUNTS)) + "\n")
    return p


@pytest.fixture
def mixed_file(tmp_path):
    p = tmp_path / "theta.txt"
    p.write_text("\n".join(map(str, MIXED_THETA)) + "\n")
    return p


def _run(capsys, *argv):
    rc = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return rc, out, err


def _rows(text):
    return list(csv.reader(io.StringIO(text)))


def test_calibrate_writes_supports(capsys, ledger_file, tmp_path):
    out_path = tmp_path / "theta.txt"
    rc, out, _ = _run(capsys, "calibrate", ledger_file, "--convention", "half-quantile", "--out", out_path)
    assert rc == 0
    theta = [float(x) for x in out_path.read_text().split()]
    assert len(theta) == 4
    assert abs(theta[0] - LEDGER_A_THETA[0]) < 1e-3
    assert "mu_theta=" in out and "convention=half-quantile" in out
    assert json.loads((tmp_path / "theta.manifest.json").read_text())["n"] == 4


@pytest.mark.parametrize("sigma", ["0.3", "2.5"])
def test_calibrate_uniform_ledger(capsys, tmp_path, sigma):
    p = tmp_path / "u.txt"
    out_path = tmp_path / "t.txt"
    p.write_text("5\n5\n")
    assert _run(capsys, "calibrate", p, "--sigma-xi", sigma, "--out", out_path)[0] == 0
    assert [float(x) for x in out_path.read_text().split()] == [0.0, 0.0]
    # Equal counts over more channels give equal (non-zero) supports.
    p.write_text("5\n5\n5\n")
    assert _run(capsys, "calibrate", p, "--sigma-xi", sigma, "--out", out_path)[0] == 0
    assert len(set(out_path.read_text().split())) == 1


@pytest.mark.parametrize("content, kind", [
    ("", "input"),
    ("3\nabc\n", "input"),
    ("0\n7\n", "saturated"),
])
def test_calibrate_bad_ledgers(capsys, tmp_path, content, kind):
    p = tmp_path / "bad.txt"
    p.write_text(content)
    rc, _, err = _run(capsys, "calibrate", p)
    assert rc == EXIT_CODES[kind]
    assert err.strip().splitlines()[-1].startswith(f"error: {kind}: ")
    if not content:
        assert "empty ledger" in err


def test_missing_ledger_file(capsys, tmp_path):
    rc, _, err = _run(capsys, "calibrate", tmp_path / "nope.txt")
    assert rc == EXIT_CODES["input"] and "nope.txt" in err


def test_simulate_noiseless(capsys):
    rc, out, _ = _run(capsys, "simulate", "--theta", "0.1,0.5,0.9", "--steps", "5", "--seed", "1")
    assert rc == 0
    rows = _rows(out)
    assert rows[0] == ["t", "m", "z_total"]
    assert [r[1] for r in rows[2:]] == ["-1"] * 5


def test_simulate_is_reproducible(capsys, tmp_path, mixed_file):
    args = ["simulate", "--supports", mixed_file, "--sigma-xi", "1", "--sigma-j", "1", "--steps", "50",
            "--seed", "9", "--record-spins"]
    assert _run(capsys, *args, "--out", tmp_path / "a.csv")[0] == 0
    assert _run(capsys, *args, "--out", tmp_path / "b.csv")[0] == 0
    a = (tmp_path / "a.csv").read_bytes()
    assert a == (tmp_path / "b.csv").read_bytes()
    header = a.decode().splitlines()[0].split(",")
    assert header[:3] == ["t", "m", "z_total"] and len(header) == 13


def test_simulate_initial_conditions_agree(capsys, tmp_path, mixed_file):
    means = {}
    for init in ("up", "down", "random"):
        out = tmp_path / f"{init}.csv"
        _run(capsys, "simulate", "--supports", mixed_file, "--sigma-xi", "1", "--sigma-j", "1",
             "--steps", "4000", "--init", init, "--seed", "3", "--out", out)
        m = np.array([float(r[1]) for r in _rows(out.read_text())[1:]])
        means[init] = m[-2000:].mean()
    spread = max(means.values()) - min(means.values())
    assert spread < 0.1


def test_simulate_generates_and_prints_seed(capsys):
    rc, _, err = _run(capsys, "simulate", "--theta", "0.5", "--steps", "2")
    assert rc == 0 and err.startswith("seed=")


@pytest.mark.parametrize("argv, kind", [
    (["simulate", "--theta", "0.5", "--theta-const", "1", "--n", "3"], "usage"),
    (["simulate", "--steps", "3"], "usage"),
    (["simulate", "--theta", "0.5", "--sigma-xi", "-1"], "usage"),
    (["simulate", "--theta-uniform", "0", "1"], "usage"),
    (["simulate", "--theta-const", "1", "--n", "0"], "usage"),
    (["simulate", "--theta-gauss", "0", "-1", "--n", "3", "--seed", "1"], "value"),
    (["fit-threshold", "--thetas", "0.5", "--target-radius", "2.5", "--n", "4", "--burn-in", "4",
      "--tail", "4", "--realizations", "2", "--seed", "0"], "not-found"),
    (["frobnicate"], "usage"),
    ([], "usage"),
])
def test_error_classes(capsys, argv, kind):
    rc, _, err = _run(capsys, *argv)
    assert rc == EXIT_CODES[kind]
    last = err.strip().splitlines()[-1]
    assert last.startswith(f"error: {kind}: ")


def test_unwritable_output(capsys, tmp_path):
    rc, _, err = _run(capsys, "simulate", "--theta", "0.5", "--seed", "1", "--out", tmp_path / "no" / "x.csv")
    assert rc == EXIT_CODES["io"] and "x.csv" in err


def test_sweep_outputs(capsys, tmp_path):
    out = tmp_path / "surface.csv"
    rc, _, _ = _run(capsys, "sweep", "--theta", "0.2,0.6,1.0", "--sigma-j-grid", "0,1", "--sigma-xi-grid",
                    "0,1", "--burn-in", "10", "--tail", "10", "--realizations", "5", "--seed", "4", "--out", out)
    assert rc == 0
    lines = out.read_text().splitlines()
    assert lines[0] == ",".join(SURFACE_HEADER) and len(lines) == 5
    first = dict(zip(SURFACE_HEADER, lines[1].split(",")))
    assert first["m_mean"] == "-1" and first["radius"] == "0"
    manifest = json.loads((tmp_path / "surface.manifest.json").read_text())
    assert manifest["master_seed"] == 4


def test_sweep_threads_do_not_change_bytes(capsys, tmp_path):
    base = ["sweep", "--theta", "0.3,0.7", "--sigma-j-grid", "0:1:3", "--sigma-xi-grid", "0.5,1",
            "--burn-in", "10", "--tail", "10", "--realizations", "6", "--seed", "8"]
    _run(capsys, *base, "--out", tmp_path / "a.csv")
    _run(capsys, *base, "--threads", "3", "--out", tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


@pytest.mark.parametrize("direction", ["diagonal", "noise", "coupling"])
def test_cycles(capsys, direction):
    rc, out, _ = _run(capsys, "cycles", "--theta-const", "0.5", "--n", "5", "--direction", direction,
                      "--sigma-grid", "0.01,0.5,2", "--burn-in", "20", "--tail", "10",
                      "--realizations", "5", "--seed", "1")
    assert rc == 0
    rows = _rows(out)
    assert rows[0] == SURFACE_HEADER and len(rows) == 4


def test_robustness_round_trip(capsys, ledger_file):
    rc, out, _ = _run(capsys, "robustness", ledger_file, "--sigma-j-grid", "0,1", "--realizations", "20",
                      "--seed", "2")
    assert rc == 0
    rows = _rows(out)
    assert rows[0] == ROBUSTNESS_HEADER
    p = np.array(LEDGER_A_COUNTS) / 10000
    bound = 3 * np.sqrt(np.sum(p * (1 - p)) * 10000 / 20) / (10000 * 2)
    assert float(rows[1][2]) < bound


def test_fit_threshold_summary(capsys, tmp_path):
    out = tmp_path / "thr.csv"
    rc, stdout, _ = _run(capsys, "fit-threshold", "--thetas", "0.2,0.6,1.0", "--n", "6", "--burn-in", "30",
                         "--tail", "10", "--realizations", "10", "--tolerance", "0.05", "--seed", "0",
                         "--out", out)
    assert rc == 0
    summary = stdout.strip().splitlines()[-1]
    fields = dict(kv.split("=") for kv in summary.split(","))
    assert set(fields) == {"a", "b", "rho2", "direction"} and fields["direction"] == "diagonal"
    lines = out.read_text().splitlines()
    assert lines[0] == ",".join(THRESHOLD_HEADER) and len(lines) == 4


def test_compare_approx(capsys, mixed_file):
    rc, out, _ = _run(capsys, "compare-approx", "--supports", mixed_file, "--steps", "20",
                      "--realizations", "10", "--seed", "5")
    assert rc == 0
    rows = _rows(out)
    assert rows[0] == COMPARE_HEADER and len(rows) == 22


def test_config_mirrors_flags(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"theta": "0.2,0.4", "steps": 30, "sigma_xi": 1.0, "seed": 11}))
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    assert _run(capsys, "simulate", "--config", cfg, "--out", a)[0] == 0
    assert _run(capsys, "simulate", "--theta", "0.2,0.4", "--steps", "30", "--sigma-xi", "1", "--seed", "11",
                "--out", b)[0] == 0
    assert a.read_bytes() == b.read_bytes()


@pytest.mark.parametrize("payload, kind", [
    ('{"bogus": 1}', "usage"),
    ('{"sigma_xi": -2}', "usage"),
    ("[1, 2]", "input"),
    ("{not json", "input"),
])
def test_config_errors(capsys, tmp_path, payload, kind):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(payload)
    assert _run(capsys, "simulate", "--theta", "1", "--config", cfg)[0] == EXIT_CODES[kind]


def test_console_script_entry_point():
    r = subprocess.run([sys.executable, "-m", "spinrisk.cli", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("spinrisk ")
