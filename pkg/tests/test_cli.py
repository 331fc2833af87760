import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from hinf_observer import SynthesisOptions, pareto_point, problem_file
from hinf_observer.cli import main, parse_grid
from hinf_observer.synthesis import matrix_from_json

EXAMPLE = str(problem_file.example_path())


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def result_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("res") / "result.json"
    assert main(["synth", EXAMPLE, "--mode", "pareto", "--out", str(path)]) == 0
    return path


def test_example_file_parses():
    prob = problem_file.load(EXAMPLE)
    assert tuple(prob.system.dims) == (2, 1, 1, 2, 2)
    assert prob.options.beta == 0.35 and prob.options.lam == 0.95


def test_unknown_field_rejected(tmp_path, capsys):
    doc = json.loads(open(EXAMPLE).read())
    doc["options"]["colour"] = "blue"
    path = tmp_path / "p.json"
    path.write_text(json.dumps(doc))
    code, out, err = run(capsys, "synth", str(path))
    assert code == 1 and out == ""
    assert err.startswith("error [load]: schema violation")


def test_malformed_json(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    code, out, err = run(capsys, "synth", str(path))
    assert code == 1 and out == ""
    assert "error [load]" in err


def test_synth_pareto_matches_library(capsys, example):
    code, out, _ = run(capsys, "synth", EXAMPLE, "--mode", "pareto", "--lambda", "0.95")
    assert code == 0
    d = json.loads(out)
    direct = pareto_point(example, SynthesisOptions(beta=0.35, lam=0.95))
    assert d["status"] == "optimal"
    assert d["gamma_star"] == direct.gamma_star
    assert d["feasible"] is True
    assert set(d) >= {"L", "gamma_star", "mu_star", "sigma_max_L", "residuals"}


def test_synth_infeasible_exit_code(capsys):
    code, out, _ = run(capsys, "synth", EXAMPLE, "--mode", "feasibility", "--gamma", "0.5", "--mu", "3.5")
    assert code == 2
    assert json.loads(out)["status"] == "infeasible"


def test_synth_missing_argument(capsys):
    code, out, err = run(capsys, "synth", EXAMPLE, "--mode", "maxgamma")
    assert code == 1 and out == ""
    assert "error [arguments]" in err


def test_synth_elementwise_and_dump(tmp_path, capsys):
    dump = tmp_path / "lmi.json"
    code, out, _ = run(capsys, "synth", EXAMPLE, "--mode", "elementwise", "--mu", "3.5",
                       "--weights", "[[1, 1], [1, 1]]", "--dump-lmi", str(dump))
    assert code == 0
    d = json.loads(out)
    assert matrix_from_json(d["Gamma_star"]).shape == (2, 2)
    assert json.loads(dump.read_text())["meta"]["kind"] == "corollary1"


def test_fixed_gain_feasibility(result_file, capsys):
    code, out, _ = run(capsys, "synth", EXAMPLE, "--mode", "feasibility", "--gamma", "0.1",
                       "--mu", "2.0", "--gain-from", str(result_file))
    assert code == 0
    saved = problem_file.load_result(result_file)["L"]
    assert np.array_equal(matrix_from_json(json.loads(out)["L"]), saved)


def test_result_round_trip_bit_identical(result_file, example):
    d = problem_file.load_result(result_file)
    direct = pareto_point(example, SynthesisOptions(beta=0.35, lam=0.95))
    for key in ("L", "P1", "P2", "G"):
        assert np.array_equal(d[key], getattr(direct, key))


def test_sweep_single_cell(tmp_path, capsys):
    out_csv = tmp_path / "c.csv"
    code, out, _ = run(capsys, "sweep", EXAMPLE, "--lambda-grid", "0.95", "--out", str(out_csv))
    assert code == 0
    rows = list(csv.DictReader(out_csv.open()))
    assert len(rows) == 1
    code, out, _ = run(capsys, "synth", EXAMPLE)
    assert float(rows[0]["gamma_star"]) == json.loads(out)["gamma_star"]


def test_sweep_reports_infeasible_cells(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("HINF_OBSERVER_THREADS", "2")
    out_csv = tmp_path / "s.csv"
    code, out, _ = run(capsys, "sweep", EXAMPLE, "--lambda-grid", "0:1:3", "--beta-grid", "0.35,1.2",
                       "--out", str(out_csv))
    assert code == 0
    rows = list(csv.DictReader(out_csv.open()))
    assert [r["status"] for r in rows if float(r["beta"]) == 1.2] == ["infeasible"] * 3
    assert json.loads(out)["infeasible"] == 3


def test_simulate(result_file, tmp_path, capsys):
    trace = tmp_path / "t.csv"
    code, out, _ = run(capsys, "simulate", EXAMPLE, "--gain-from", str(result_file), "--out", str(trace))
    assert code == 0
    d = json.loads(out)
    assert d["decay_check"]["passed"] and d["decay_check"]["worst_ratio"] <= 1
    assert d["l2_gain"]["estimate"] <= d["l2_gain"]["mu_star"]
    assert trace.read_text().splitlines()[0] == "t,x_1,x_2,xhat_1,xhat_2,z_1,z_2,w_1"


def test_simulate_missing_gain(tmp_path, capsys):
    code, out, err = run(capsys, "simulate", EXAMPLE, "--gain-from", str(tmp_path / "none.json"),
                         "--out", str(tmp_path / "t.csv"))
    assert code == 1 and out == ""
    assert "error [load]" in err


def test_margins(result_file, tmp_path, capsys):
    code, out, _ = run(capsys, "margins", str(result_file), EXAMPLE)
    assert code == 0
    d = json.loads(out)["norm"]
    saved = json.loads(result_file.read_text())
    assert d["delta_gamma"] == saved["gamma_star"] - 0.2
    code, out, _ = run(capsys, "margins", str(result_file), EXAMPLE,
                       "--gamma-actual", repr(saved["gamma_star"]))
    assert json.loads(out)["norm"]["delta_gamma"] == 0.0


def test_margins_interval_csv(tmp_path, capsys):
    res = tmp_path / "ew.json"
    assert main(["synth", EXAMPLE, "--mode", "elementwise", "--mu", "3.5", "--out", str(res)]) == 0
    capsys.readouterr()
    iv = tmp_path / "iv.csv"
    code, out, _ = run(capsys, "margins", str(res), EXAMPLE, "--interval-csv", str(iv))
    assert code == 0
    rows = list(csv.DictReader(iv.open()))
    Gs = matrix_from_json(json.loads(res.read_text())["Gamma_star"])
    r21 = [r for r in rows if (r["i"], r["j"]) == ("2", "1")][0]
    assert float(r21["upper"]) == 2 ** -0.75 * Gs[1, 0] - 0.2


def test_parse_grid():
    assert parse_grid("0:1:5") == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert parse_grid("0.1,0.2") == [0.1, 0.2]
    assert len(parse_grid("0:1:101")) == 101


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "hinf_observer", "synth", EXAMPLE, "--mode", "feasibility",
                           "--gamma", "0.5", "--mu", "3.5"], capture_output=True, text=True)
    assert proc.returncode == 2
    assert json.loads(proc.stdout)["status"] == "infeasible"
