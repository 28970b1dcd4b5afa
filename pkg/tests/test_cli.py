import json
import subprocess
import sys
from fractions import Fraction as F

import pytest

from conftest import m_window_params, resonant_params
import random

from qims.cli import main, parse_scalar, emit_scalar


def write_cfg(tmp_path, name, payload):
    p = tmp_path / name
    p.write_text(json.dumps(payload), encoding="utf-8")
    return str(p)


def base_cfg(L=2, N=1, M=1):
    rnd = random.Random(10 * L + N + M)
    params = resonant_params(L, N, M, rnd, dict_m=True)
    return {
        "model": {"L": L, "N": N, "M": M},
        "parameters": {
            "e": [str(x) for x in params.e],
            "kappa": [str(x) for x in params.kappa],
            "theta": [str(x) for x in params.theta[1:]],
            "planck": "1",
        },
        "z": [str(F(2, 5) + F(k, 7)) for k in range(N)],
    }


def test_parse_and_emit_scalars():
    assert parse_scalar("3/5") == F(3, 5)
    assert parse_scalar("7") == F(7)
    assert parse_scalar("0.25") == 0.25
    assert emit_scalar(F(3, 5)) == {"value": "3/5", "kind": "exact"}
    assert emit_scalar(F(0)) == {"value": "0/1", "kind": "exact"}
    out = emit_scalar(0.25, 1e-10)
    assert out["kind"] == "float" and out["tolerance"] == 1e-10


def test_cmd_basis(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "c.json", base_cfg(3, 2, 2))
    assert main(["--config", cfg, "basis"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["dimension"] == 15
    assert payload["basis"][0] == [0, 0, 0, 0]


def test_cmd_hamiltonian_json_exact(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "c.json", base_cfg(2, 1, 1))
    assert main(["--config", cfg, "hamiltonian", "--i", "1"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["dimension"] == 2
    cell = payload["matrix"][0][0]
    assert cell["kind"] == "exact" and "/" in cell["value"] or cell["value"].lstrip("-").isdigit()


def test_cmd_hamiltonian_csv(tmp_path):
    cfg = write_cfg(tmp_path, "c.json", base_cfg(2, 1, 1))
    out = tmp_path / "m.csv"
    assert main(["--config", cfg, "hamiltonian", "--out", str(out)]) == 0
    rows = out.read_text().strip().splitlines()
    assert len(rows) == 3  # header + 2 matrix rows
    assert rows[0].split(",")[0] == "1"


def test_cmd_check_commute_pass(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "c.json", base_cfg(3, 2, 1))
    assert main(["--config", cfg, "check", "commute", "--dmax", "2"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["passed"] is True
    assert payload["checks"]["commute"]["residual"]["value"] == "0/1"


def test_cmd_check_all_small(tmp_path, capsys):
    cfg = base_cfg(2, 2, 1)
    cfg["lemma_samples"] = 3
    path = write_cfg(tmp_path, "c.json", cfg)
    assert main(["--config", path, "check", "all", "--dmax", "2"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["passed"] is True
    assert set(payload["checks"]) == {"commute", "braid", "flatness", "subspace",
                                      "garnier", "lemmas"}


def test_malformed_config_exit2(tmp_path, capsys):
    cfg = base_cfg(2, 1, 1)
    cfg["parameters"]["kappa"] = ["1", "1"]  # breaks sum(kappa) = sum(theta)...
    # theta_0 is derived, so break sum(e) instead
    cfg["parameters"]["e"] = ["1", "1"]
    path = write_cfg(tmp_path, "c.json", cfg)
    assert main(["--config", path, "check", "commute"]) == 2
    payload = json.loads(capsys.readouterr().out)
    assert payload["error"]["code"] == 2
    assert "sum(e)" in payload["error"]["message"]


def test_theta0_violation_named(tmp_path, capsys):
    cfg = base_cfg(2, 1, 1)
    cfg["parameters"]["theta0"] = "99"
    path = write_cfg(tmp_path, "c.json", cfg)
    assert main(["--config", path, "check", "commute"]) == 2
    payload = json.loads(capsys.readouterr().out)
    assert "sum(kappa) = sum(theta)" in payload["error"]["message"]


def test_numerical_failure_exit3(tmp_path, capsys):
    cfg = base_cfg(2, 1, 1)
    cfg["z"] = ["1"]  # pole
    path = write_cfg(tmp_path, "c.json", cfg)
    assert main(["--config", path, "hamiltonian"]) == 3
    payload = json.loads(capsys.readouterr().out)
    assert payload["error"]["code"] == 3


def test_cmd_integral_and_series_agree(tmp_path, capsys):
    from conftest import m1_window_params
    params = m1_window_params(2, 1)
    cfg = {
        "model": {"L": 2, "N": 1, "M": 1},
        "parameters": {"e": [str(x) for x in params.e],
                       "kappa": [str(x) for x in params.kappa],
                       "theta": [str(params.theta[1])],
                       "planck": str(params.planck)},
        "z": ["0.4"],
        "quadrature": {"nodes_per_axis": 24},
        "order": 60,
    }
    path = write_cfg(tmp_path, "c.json", cfg)
    assert main(["--config", path, "integral"]) == 0
    quad = json.loads(capsys.readouterr().out)
    assert main(["--config", path, "series"]) == 0
    ser = json.loads(capsys.readouterr().out)
    for a, b in zip(quad["coefficients"], ser["coefficients"]):
        assert a["value"] == pytest.approx(b["value"], rel=1e-8)


def test_cmd_pfaffian_transport(tmp_path, capsys):
    cfg = base_cfg(2, 2, 1)
    cfg["path"] = [["0.40", "0.70"], ["0.45", "0.75"], ["0.40", "0.70"]]
    cfg["c0"] = ["1", "0", "0.5"]
    path = write_cfg(tmp_path, "c.json", cfg)
    assert main(["--config", path, "pfaffian"]) == 0
    payload = json.loads(capsys.readouterr().out)
    end = payload["endpoint"]
    assert abs(end[0]["value"][0] - 1.0) < 1e-8
    assert payload["steps"]["accepted"] > 0


def test_cmd_verify_and_plot(tmp_path, capsys):
    from conftest import m_window_params
    params = m_window_params(2, 1, 1, gamma=F(-1, 2))
    cfg = {
        "model": {"L": 2, "N": 1, "M": 1},
        "parameters": {"e": [str(x) for x in params.e],
                       "kappa": [str(x) for x in params.kappa],
                       "theta": [str(params.theta[1])],
                       "planck": str(params.planck)},
        "z": ["2/5"],
        "quadrature": {"nodes_per_axis": 24},
        "tolerances": {"pde": 1e-4},
    }
    path = write_cfg(tmp_path, "c.json", cfg)
    svg = tmp_path / "traj.svg"
    assert main(["--config", path, "verify", "--plot", str(svg)]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["passed"] is True
    assert payload["cohomology_vs_operator"]["exact_equal"] is True
    text = svg.read_text()
    assert text.startswith("<svg") and "polyline" in text


def test_byte_identical_reruns(tmp_path):
    cfg = base_cfg(2, 1, 1)
    path = write_cfg(tmp_path, "c.json", cfg)
    outs = []
    for k in range(2):
        out = tmp_path / f"out{k}.json"
        assert main(["--config", path, "hamiltonian", "--out", str(out)]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_entry_point_subprocess(tmp_path):
    cfg = base_cfg(2, 1, 1)
    path = write_cfg(tmp_path, "c.json", cfg)
    proc = subprocess.run([sys.executable, "-m", "qims.cli", "--config", path,
                           "basis"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["dimension"] == 2


def test_threaded_sweep_matches_serial(tmp_path, capsys, monkeypatch):
    cfg = write_cfg(tmp_path, "c.json", base_cfg(2, 2, 1))
    assert main(["--config", cfg, "check", "commute", "--dmax", "2"]) == 0
    serial = json.loads(capsys.readouterr().out)
    monkeypatch.setenv("QIMS_THREADS", "4")
    assert main(["--config", cfg, "check", "commute", "--dmax", "2"]) == 0
    threaded = json.loads(capsys.readouterr().out)
    assert serial == threaded
