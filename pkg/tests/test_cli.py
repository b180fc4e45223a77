import csv
import json

import jsonschema
import numpy as np
import pytest
import scipy.io
import scipy.sparse as sp

from tiar import cli, dep_random


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _schema():
    return cli._schema()


def test_solve_writes_outputs(tmp_path):
    rc = cli.main(["solve", "--grid", "8", "--m", "20", "--p", "5", "--out", str(tmp_path)])
    assert rc == 0
    eig = _rows(tmp_path / "eigenvalues.csv")
    assert len(eig) == 5 and all(float(r["residual"]) < 1e-9 for r in eig)
    trace = _rows(tmp_path / "trace.csv")
    assert list(trace[0]) == cli.TRACE_FIELDS
    summary = json.loads((tmp_path / "summary.json").read_text())
    jsonschema.validate(summary, _schema())
    assert summary["runs"][0]["status"] == "converged"
    assert summary["problem"]["n"] == 64


def test_config_file_and_flag_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"grid": 6, "m": 18, "p": 4, "strategy": "semi-explicit"}))
    rc = cli.main(["solve", "--config", str(cfg), "--p", "3", "--out", str(tmp_path / "o")])
    assert rc == 0
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    run = summary["runs"][0]
    assert run["config"]["p"] == 3 and run["config"]["m"] == 18
    assert run["config"]["strategy"] == "semi-explicit"
    assert summary["problem"]["n"] == 36


@pytest.mark.parametrize(
    "argv",
    [
        ["solve", "--problem", "mtx", "--a0", "missing.mtx"],
        ["solve", "--problem", "poly", "--coeff", "missing.mtx", "--coeff", "x.mtx"],
        ["solve", "--m", "5", "--p", "5"],
        ["solve", "--grid", "1"],
        ["oracle", "--grid", "30", "--k", "15"],
        ["oracle", "--grid", "4", "--k", "-1"],
    ],
)
def test_input_errors(tmp_path, argv, capsys):
    assert cli.main(argv + ["--out", str(tmp_path)]) == 1
    assert "error" in capsys.readouterr().err


def test_bad_config_file(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    assert cli.main(["solve", "--config", str(cfg)]) == 1
    cfg.write_text("{not json")
    assert cli.main(["solve", "--config", str(cfg)]) == 1


def test_not_converged_exit_code(tmp_path):
    rc = cli.main(["solve", "--grid", "8", "--m", "8", "--p", "5", "--max-restarts", "0", "--out", str(tmp_path)])
    assert rc == 2
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["runs"][0]["status"] == "not_converged"
    assert (tmp_path / "trace.csv").exists()


def test_oracle_modes(capsys):
    assert cli.main(["oracle", "--grid", "6", "--k", "10"]) == 0
    assert "MATCH" in capsys.readouterr().out
    assert cli.main(["oracle", "--grid", "6", "--k", "10", "--flip-sign"]) == 3
    assert cli.main(["oracle", "--grid", "6", "--k", "0"]) == 0


def test_compare(tmp_path, capsys):
    rc = cli.main(["compare", "--grid", "8", "--m", "20", "--p", "5", "--out", str(tmp_path)])
    assert rc == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    jsonschema.validate(summary, _schema())
    assert summary["matched"] == 5
    assert {r["config"]["strategy"] for r in summary["runs"]} == {"semi-explicit", "implicit"}
    trace = _rows(tmp_path / "trace.csv")
    assert {r["strategy"] for r in trace} == {"semi-explicit", "implicit"}
    assert "matched eigenvalues: 5" in capsys.readouterr().out


def test_matrix_market_problems(tmp_path):
    prob = dep_random(6, seed=2)
    names = []
    for name, A in zip(("a0", "a1", "a2"), (prob.A0, prob.A1, prob.A2)):
        scipy.io.mmwrite(str(tmp_path / name), sp.csc_matrix(A))
        names.append(str(tmp_path / f"{name}.mtx"))
    argv = ["solve", "--problem", "mtx", "--a0", names[0], "--a1", names[1], "--a2", names[2]]
    assert cli.main(argv + ["--m", "12", "--p", "3", "--out", str(tmp_path / "o")]) == 0
    rng = np.random.default_rng(0)
    coeffs = []
    for j, A in enumerate([rng.standard_normal((3, 3)) + 3 * np.eye(3), rng.standard_normal((3, 3)), np.eye(3)]):
        path = tmp_path / f"c{j}.mtx"
        scipy.io.mmwrite(str(path), A)
        coeffs += ["--coeff", str(path)]
    assert cli.main(["solve", "--problem", "poly", *coeffs, "--m", "10", "--p", "3", "--out", str(tmp_path / "p")]) == 0
    scipy.io.mmwrite(str(tmp_path / "big.mtx"), np.eye(4))
    bad = ["solve", "--problem", "poly", "--coeff", str(tmp_path / "c0.mtx"), "--coeff", str(tmp_path / "big.mtx")]
    assert cli.main(bad) == 1


def test_schema_rejects_malformed():
    with pytest.raises(jsonschema.ValidationError):
        jsonschema.validate({"command": "solve", "problem": {"name": "x", "n": 1}, "runs": []}, _schema())


def test_module_entry_point():
    import subprocess
    import sys

    out = subprocess.run([sys.executable, "-m", "tiar", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "oracle" in out.stdout
