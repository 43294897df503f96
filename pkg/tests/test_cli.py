import csv
import io
import json
import subprocess
import sys

import pytest

from bregpep.cli import EXIT_OK, EXIT_USAGE, EXIT_VERIFY, main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, out


def run_json(capsys, *argv):
    code, out = run(capsys, *argv)
    return code, json.loads(out)


def test_pep_solve_nolips(capsys):
    code, row = run_json(capsys, "pep", "solve", "--algo", "nolips", "--N", "5")
    assert code == EXIT_OK
    assert row["status"] == "Optimal"
    assert row["value"] == pytest.approx(0.2, abs=1e-3)
    assert row["theory"] == pytest.approx(0.2)
    assert not row["unbounded"]


def test_pep_solve_unbounded_is_not_an_error(capsys):
    code, row = run_json(capsys, "pep", "solve", "--algo", "nolips", "--N", "2", "--lambda", "1.5")
    assert code == EXIT_OK
    assert row["status"] == "UnboundedSuspected" and row["unbounded"]
    assert row["value"] is None


def test_pep_solve_residual(capsys):
    code, row = run_json(capsys, "pep", "solve", "--algo", "residual", "--N", "5")
    assert code == EXIT_OK
    assert row["value"] <= 0.1 + 1e-3


def test_pep_solve_csv_to_file(tmp_path):
    path = tmp_path / "row.csv"
    assert main(["pep", "solve", "--algo", "nolips", "--N", "1", "--format", "csv", "--out", str(path)]) == 0
    rows = list(csv.DictReader(open(path)))
    assert float(rows[0]["value"]) == pytest.approx(1.0, abs=1e-3)


def test_pep_solve_low_rank(capsys):
    code, row = run_json(capsys, "pep", "solve", "--algo", "nolips", "--N", "3", "--low-rank", "1e-4")
    assert code == EXIT_OK
    assert row["refined_rank"] <= 3
    assert len(row["representation"]["points"]) == 5


@pytest.mark.parametrize("argv", [
    ["pep", "solve", "--algo", "nolips", "--N", "2", "--Ltilde", "2"],
    ["pep", "solve", "--algo", "iga", "--N", "2", "--low-rank", "1e-4"],
    ["pep", "solve", "--algo", "residual", "--N", "1"],
    ["sweep", "--algo", "nolips", "--N-list", ""],
    ["sweep", "--algo", "nolips", "--N-list", "1,x"],
    ["lower-bound", "--N", "2", "--eps", "1.5"],
    ["verify", "--which", "prop46", "--k", "1"],
    ["verify", "--which", "thm31", "--k", "2", "--trials", "0"],
    ["sample-instance", "--instance", "worst1d", "--grid", "0:1:0"],
    ["sample-instance", "--instance", "worst1d", "--grid", "0:1"],
    ["sample-instance", "--instance", "worst1d", "--grid2", "0:1:3"],
])
def test_usage_errors(capsys, argv):
    assert main(argv) == EXIT_USAGE
    assert "error" in capsys.readouterr().err


def test_argparse_rejects_unknown_algo():
    with pytest.raises(SystemExit) as exc:
        main(["pep", "solve", "--algo", "gd", "--N", "2"])
    assert exc.value.code == EXIT_USAGE


def test_sweep_csv(capsys):
    code, out = run(capsys, "sweep", "--algo", "nolips", "--N-list", "1,2,4")
    assert code == EXIT_OK
    rows = list(csv.DictReader(io.StringIO(out)))
    assert list(rows[0]) == ["N", "value", "theory", "rel_error", "primal_feasibility", "status", "solve_time"]
    assert [int(r["N"]) for r in rows] == [1, 2, 4]
    for r in rows:
        assert float(r["theory"]) == pytest.approx(1 / int(r["N"]))
        assert float(r["rel_error"]) <= 1e-3


def test_sweep_records_failures(capsys):
    code, rows = run_json(capsys, "sweep", "--algo", "residual", "--N-list", "1,2", "--format", "json")
    assert code == EXIT_OK
    assert rows[0]["status"] == "Error" and rows[0]["value"] is None
    assert rows[1]["status"] == "Optimal"


def test_sweep_parallel_matches_serial(capsys):
    _, a = run_json(capsys, "sweep", "--algo", "nolips", "--N-list", "1,2", "--format", "json")
    _, b = run_json(capsys, "sweep", "--algo", "nolips", "--N-list", "1,2", "--format", "json", "--jobs", "2")
    assert [r["value"] for r in a] == [r["value"] for r in b]


def test_lower_bound(capsys):
    code, rep = run_json(capsys, "lower-bound", "--N", "2", "--eps", "0.5")
    assert code == EXIT_OK and rep["pass"]
    code, rep = run_json(capsys, "lower-bound", "--N", "3", "--eps", "0.25", "--strategy", "iga")
    assert code == EXIT_OK and rep["pass"]
    assert rep["mu"] == pytest.approx(0.25 / 980)


@pytest.mark.parametrize("which,k", [("thm31", 4), ("prop46", 2)])
def test_verify(capsys, which, k):
    code, out = run_json(capsys, "verify", "--which", which, "--k", str(k), "--trials", "20")
    assert code == EXIT_OK
    assert out["ok"] and out["max_residual"] <= 1e-10


def test_verify_failure_exit_code(capsys, monkeypatch):
    from bregpep import certificates

    monkeypatch.setattr(certificates, "verify_identity", lambda *a, **k: 1e-3)
    code, out = run_json(capsys, "verify", "--which", "thm31", "--k", "2", "--trials", "3")
    assert code == EXIT_VERIFY and not out["ok"]


def test_sample_instance_worst1d(capsys):
    code, out = run(capsys, "sample-instance", "--instance", "worst1d", "--N", "3", "--mu", "0.01",
                    "--grid=-0.5:1:7")
    assert code == EXIT_OK
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 7
    assert float(rows[0]["x"]) == -0.5


def test_sample_instance_lower_bound_mesh(capsys):
    code, rows = run_json(capsys, "sample-instance", "--instance", "lower-bound", "--n", "2", "--grid=-1:1:3",
                          "--grid2", "0:1:2", "--format", "json")
    assert code == EXIT_OK
    assert len(rows) == 6


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "bregpep", "verify", "--which", "thm31", "--k", "2",
                        "--trials", "5"], capture_output=True, text=True, timeout=120)
    assert r.returncode == 0
    assert json.loads(r.stdout)["ok"]
