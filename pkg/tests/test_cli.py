import json
import subprocess
import sys

import numpy as np
import pytest

from drlmi import cli, io, sdpcore
from drlmi.ambiguity import AmbiguitySpec
from drlmi.model import PlantRealization

from .test_io import scalar_problem


@pytest.fixture
def scalar_file(tmp_path):
    path = tmp_path / "scalar.json"
    io.write_problem(path, scalar_problem())
    return path


@pytest.fixture
def toy_file(tmp_path):
    # unstable scalar plant, stabilizable and detectable
    p = PlantRealization([[1.2]], [[1.0, 0.0]], [[1.0]], [[1.0], [0.0]], np.zeros((2, 2)), [[0.0], [1.0]], [[1.0]], [[0.0, 0.1]])
    path = tmp_path / "toy.json"
    io.write_problem(path, io.ProblemFile(p, AmbiguitySpec("cor", 0.3, np.eye(2))))
    return path


def test_analyze_scalar_fixture(scalar_file, tmp_path, capsys):
    out = tmp_path / "r.json"
    assert cli.main(["analyze", str(scalar_file), "--check-gap", "--out", str(out)]) == 0
    doc = io.read_result(out)
    assert doc["cost"] == pytest.approx(3.0, abs=1e-3)
    assert abs(doc["duality_gap"]) < 1e-5
    assert {"lambda", "Q", "P"} <= set(doc)
    text = capsys.readouterr().out
    assert "worst-case cost" in text


def test_analyze_gamma0_is_h2(scalar_file, capsys):
    assert cli.main(["analyze", str(scalar_file), "--gamma", "0", "--output", "csv"]) == 0
    rows = dict(line.split(",", 1) for line in capsys.readouterr().out.splitlines() if "," in line)
    assert float(rows["cost"]) == pytest.approx(4.0 / 3.0, rel=1e-5)


def test_malformed_file_exits_1_without_solving(scalar_file, tmp_path, monkeypatch, capsys):
    d = json.loads(scalar_file.read_text())
    d["plant"]["B_w"] = [[1.0, 2.0]]
    bad = tmp_path / "bad.json"
    bad.write_text(io.dumps(d))

    def no_solver(*a, **k):
        raise AssertionError("solver invoked")

    monkeypatch.setattr(sdpcore, "_run_clarabel", no_solver)
    assert cli.main(["analyze", str(bad)]) == 1
    err = capsys.readouterr().err
    assert "bad.json:" in err and "plant.B_w" in err


def test_unstable_open_loop_exits_2(toy_file, capsys):
    assert cli.main(["analyze", str(toy_file)]) == 2
    assert "spectral radius" in capsys.readouterr().err


def test_unstabilizable_synthesis_exits_2(tmp_path, capsys):
    p = PlantRealization([[1.2]], [[1.0, 0.0]], [[0.0]], [[1.0], [0.0]], np.zeros((2, 2)), [[0.0], [1.0]], [[1.0]], [[0.0, 0.1]])
    path = tmp_path / "bad.json"
    io.write_problem(path, io.ProblemFile(p, AmbiguitySpec("cor", 0.3, np.eye(2))))
    assert cli.main(["synthesize", str(path), "--out", str(tmp_path / "k.json")]) == 2


def test_solver_trouble_exits_3(scalar_file, monkeypatch):
    monkeypatch.setenv(cli.ENV_SOLVER_OPTS, json.dumps({"max_iter": 1, "retry": False}))
    assert cli.main(["analyze", str(scalar_file)]) == 3


def test_bad_solver_env_exits_1(scalar_file, monkeypatch):
    monkeypatch.setenv(cli.ENV_SOLVER_OPTS, "{oops")
    assert cli.main(["analyze", str(scalar_file)]) == 1


def test_synthesize_round_trip(toy_file, tmp_path, capsys):
    k = tmp_path / "k.json"
    assert cli.main(["synthesize", str(toy_file), "--out", str(k)]) == 0
    summary = json.loads(k.read_text())
    out = tmp_path / "r.json"
    assert cli.main(["analyze", str(toy_file), "--controller", str(k), "--out", str(out)]) == 0
    cost = io.read_result(out)["cost"]
    assert cost == pytest.approx(summary["reanalysis_cost"], rel=1e-6)
    assert summary["reanalysis_cost"] <= summary["h2_worst_case"]
    assert "worst case <= H2 worst case" in capsys.readouterr().out


def test_synthesize_h2_kind(toy_file, tmp_path):
    from drlmi.synthesis import synthesize_h2

    k = tmp_path / "k.json"
    assert cli.main(["synthesize", str(toy_file), "--kind", "h2", "--out", str(k)]) == 0
    ref = synthesize_h2(io.read_problem(toy_file).plant, np.eye(2)).cost
    assert json.loads(k.read_text())["cost"] == pytest.approx(ref, rel=1e-8)


def test_bode_rows(scalar_file, capsys):
    assert cli.main(["bode", str(scalar_file), "--grid", "0,3.141592653589793,7"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "output,theta,sigma_max"
    assert len(lines) - 1 == 7 * 1
    assert float(lines[1].split(",")[2]) == pytest.approx(2.0)
    assert float(lines[-1].split(",")[2]) == pytest.approx(2.0 / 3.0)


def test_bode_row_count_multi_output(toy_file, tmp_path, capsys):
    k = tmp_path / "k.json"
    cli.main(["synthesize", str(toy_file), "--out", str(k), "--no-compare"])
    out = tmp_path / "b.csv"
    assert cli.main(["bode", str(toy_file), "--controller", str(k), "--grid", "11", "--out", str(out)]) == 0
    assert len(out.read_text().strip().splitlines()) - 1 == 11 * 2


def test_bad_grid_exits_1(scalar_file):
    assert cli.main(["bode", str(scalar_file), "--grid", "1,2"]) == 1


def test_worst_case_is_seeded(scalar_file, tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (a, b):
        assert cli.main(["worst-case", str(scalar_file), "--samples", "20", "--horizon", "5000", "--seed", "3", "--out", str(path)]) == 0
    assert a.read_text() == b.read_text()
    header, row = a.read_text().strip().splitlines()
    assert header == "output,worst-case_variance,mc_mean,mc_std"
    name, sdp, mean, _ = row.split(",")
    assert float(sdp) == pytest.approx(3.0, abs=1e-4)
    assert float(mean) == pytest.approx(3.0, rel=0.02)
    assert "seed: 3" in capsys.readouterr().out


def test_default_seed_is_printed(scalar_file, capsys):
    assert cli.main(["simulate", str(scalar_file), "--horizon", "100"]) == 0
    assert f"seed: {cli.DEFAULT_SEED}" in capsys.readouterr().out


def test_simulate_nominal_approaches_h2(scalar_file, tmp_path):
    out = tmp_path / "s.csv"
    assert cli.main(["simulate", str(scalar_file), "--horizon", "50000", "--seed", "1", "--out", str(out)]) == 0
    # columns t, z1, w1
    z = np.loadtxt(out, delimiter=",", skiprows=1, usecols=1)
    assert np.mean(z**2) == pytest.approx(4.0 / 3.0, rel=0.05)


def test_shipped_standin_is_labelled():
    prob = io.read_problem(cli.turbine_standin_path())
    assert prob.meta["non_authoritative"] is True
    assert prob.dimensions == {"n_x": 7, "n_w": 2, "n_u": 1, "n_z": 4, "n_y": 3}
    np.testing.assert_array_equal(prob.scaling, cli.TURBINE_SCALING)


def test_bench_turbine_report_shape(tmp_path, capsys):
    assert cli.main(["bench-turbine", "--scaled", "--grid", "5", "--outdir", str(tmp_path)]) == 0
    report = io.read_result(tmp_path / "report.json")
    v = report["variants"]["scaled"]
    assert len(v["per_output"]["H2"]) == 4 and len(v["per_output"]["DR"]) == 4
    assert v["dr_total_le_h2"] and v["dr_first_output_lt_h2"]
    assert report["authoritative"] is False
    assert len((tmp_path / "bode_scaled.csv").read_text().strip().splitlines()) == 1 + 5 * 4
    assert "non-authoritative" in capsys.readouterr().out


def test_console_entry_point(scalar_file):
    r = subprocess.run([sys.executable, "-m", "drlmi.cli", "analyze", str(scalar_file)], capture_output=True, text=True)
    assert r.returncode == 0 and "worst-case cost" in r.stdout
