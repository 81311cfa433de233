import csv
import io
import json
import shutil
import subprocess
import sys

import pytest

from fairvol.cli import Outcome, RunConfig, expectation_met, lint_trace, main, run_bench, write_table

from conftest import BENCH, requires_solver

# 1 - Phi(1 / sqrt(5)), mpmath at 40 digits
SUM_EXACT = 0.32736042300928851


def _trace(path):
    return [json.loads(line) for line in path.read_text().splitlines()]


# -- verify -----------------------------------------------------------------------------------------


@requires_solver
def test_verify_unfair_exit_code(tmp_path, capsys):
    trace, table = tmp_path / "t.jsonl", tmp_path / "t.csv"
    code = main(["verify", str(BENCH / "hiring.fair"), "--trace", str(trace), "--csv", str(table)])
    assert code == 1
    assert capsys.readouterr().out.strip() == "UNFAIR"
    records = _trace(trace)
    assert records and records[-1]["ratio"][1] <= 0.9
    rows = list(csv.DictReader(table.open()))
    assert len(rows) == len(records)
    assert {"round", "minority_lower", "ratio_upper", "queries"} <= set(rows[0])


@requires_solver
def test_verify_fair_exit_code(capsys):
    assert main(["verify", str(BENCH / "svm4a_independent.fair")]) == 0
    assert capsys.readouterr().out.strip() == "FAIR"


@requires_solver
def test_zero_rounds_is_unknown(capsys):
    assert main(["verify", str(BENCH / "hiring.fair"), "--max-rounds", "0"]) == 2
    assert capsys.readouterr().out.strip() == "UNKNOWN lo=0 hi=inf"


@requires_solver
def test_epsilon_flag_overrides_directive(capsys):
    # the file asks for 0.1 and is unfair; a slack of 0.95 accepts any ratio above 0.05
    code = main(["verify", str(BENCH / "hiring.fair"), "--epsilon", "0.95"])
    assert code == 0
    assert capsys.readouterr().out.strip() == "FAIR"


@requires_solver
def test_event_mode_brackets_exact_value(capsys):
    code = main(["verify", str(BENCH / "sum_of_gaussians.fair"), "--width", "0.05"])
    assert code == 0
    line = capsys.readouterr().out.strip()
    lo, hi = (float(part.split("=")[1]) for part in line.split())
    assert lo <= SUM_EXACT <= hi
    assert hi - lo <= 0.05


@requires_solver
def test_event_flag_on_fairness_file(capsys):
    code = main(["verify", str(BENCH / "hiring.fair"), "--event", "ethnicity > 10", "--width", "0.01"])
    assert code == 0
    lo, hi = (float(part.split("=")[1]) for part in capsys.readouterr().out.split())
    # Pr[N(0, 10) > 10] = 1 - Phi(1)
    assert lo <= 0.15865525393145705141 <= hi


def test_parse_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.fair"
    bad.write_text("x ~ gauss(0,1)\ny = = 2\n")
    assert main(["verify", str(bad)]) == 64
    assert f"{bad}:2:" in capsys.readouterr().err


def test_missing_file_exit_code(tmp_path, capsys):
    assert main(["verify", str(tmp_path / "nope.fair")]) == 64


def test_missing_solver_exit_code(capsys):
    assert main(["verify", str(BENCH / "hiring.fair"), "--solver", "/nonexistent/z3"]) == 69
    assert "error" in capsys.readouterr().err


def test_bad_flag_values_are_usage_errors(capsys):
    assert main(["verify", str(BENCH / "hiring.fair"), "--decay", "1.5"]) == 64


def test_dump_pvc(capsys):
    assert main(["verify", str(BENCH / "hiring.fair"), "--dump-pvc"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("(set-logic QF_LRA)")
    assert "(check-sat)" in out
    assert "; density ethnicity" in out


@requires_solver
def test_runs_are_deterministic(tmp_path):
    traces = []
    for i in range(2):
        path = tmp_path / f"{i}.jsonl"
        main(["verify", str(BENCH / "hiring.fair"), "--trace", str(path), "--seed", "4"])
        traces.append([{k: v for k, v in r.items() if k != "elapsed"} for r in _trace(path)])
    assert traces[0] == traces[1]


# -- trace lint ----------------------------------------------------------------------------------------


@requires_solver
def test_trace_lint_accepts_real_trace(tmp_path, capsys):
    trace = tmp_path / "t.jsonl"
    main(["verify", str(BENCH / "hiring.fair"), "--trace", str(trace)])
    capsys.readouterr()
    assert main(["trace-lint", str(trace)]) == 0
    assert capsys.readouterr().out.strip() == "ok"


def test_trace_lint_flags_violations():
    good = {"round": 1, "bounds": {"a": [0.1, 0.5]}, "ratio": [0.2, "inf"], "queries": 4}
    bad = {"round": 1, "bounds": {"a": [0.05, 0.6]}, "ratio": [0.1, "inf"], "queries": 3}
    problems = lint_trace([json.dumps(good), json.dumps(bad), "{not json"])
    text = "\n".join(problems)
    for fragment in ("round does not increase", "lower bound decreases", "upper bound increases",
                     "query count decreases", "ratio lower bound decreases", "not JSON"):
        assert fragment in text
    assert lint_trace([json.dumps(good)]) == []


def test_trace_lint_exit_code(tmp_path, capsys):
    path = tmp_path / "t.jsonl"
    path.write_text(json.dumps({"round": 1, "bounds": {"a": [0.7, 0.5]}, "ratio": [0, 1]}) + "\n")
    assert main(["trace-lint", str(path)]) == 1


# -- bench ---------------------------------------------------------------------------------------------


def test_bench_empty_directory(tmp_path, capsys):
    assert main(["bench", str(tmp_path)]) == 0
    assert capsys.readouterr().out.strip() == "fixture,result,expected,match,rounds,queries,seconds,lower,upper"


def test_bench_not_a_directory(tmp_path):
    assert main(["bench", str(tmp_path / "missing")]) == 64


@requires_solver
def test_bench_reports_corrupt_fixture(tmp_path, capsys):
    shutil.copy(BENCH / "svm4a_independent.fair", tmp_path)
    (tmp_path / "broken.fair").write_text("// expect: FAIR\nx ~ gauss(0,\n")
    table = tmp_path / "out.csv"
    code = main(["bench", str(tmp_path), "--csv", str(table)])
    rows = {r["fixture"]: r for r in csv.DictReader(table.open())}
    assert rows["broken"]["result"] == "ERROR"
    assert rows["svm4a_independent"]["result"] == "FAIR"
    assert rows["svm4a_independent"]["match"] == "yes"
    # an error row is reported, not treated as a wrong verdict
    assert code == 0
    assert "broken" in capsys.readouterr().out


@requires_solver
def test_bench_rows_for_event_fixture(tmp_path):
    shutil.copy(BENCH / "sum_of_gaussians.fair", tmp_path)
    (row,) = run_bench(tmp_path, RunConfig(width=0.05))
    assert row["result"] == "BOUNDS"
    assert row["match"] == "yes"


def test_expectation_met():
    out = Outcome("FAIR", 0, 3, 10, 1.0, 0.9, 1.1)
    assert expectation_met("FAIR", out) is True
    assert expectation_met("UNFAIR", out) is False
    assert expectation_met(None, out) is None
    assert expectation_met("1.0", out) is True
    assert expectation_met("1.2", out) is False


def test_console_entry_point():
    exe = shutil.which("fairvol")
    cmd = [exe] if exe else [sys.executable, "-m", "fairvol.cli"]
    out = subprocess.run(cmd + ["--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for sub in ("verify", "bench", "trace-lint"):
        assert sub in out.stdout


def test_write_table_header_only():
    buf = io.StringIO()
    write_table([], buf)
    assert buf.getvalue().strip().split(",")[0] == "fixture"


@pytest.mark.parametrize("flag", ["--adf", "--adf-steps", "--decay", "--seed", "--solver", "--width"])
def test_run_flags_are_shared(flag, capsys):
    for sub in ("verify", "bench"):
        with pytest.raises(SystemExit):
            main([sub, "--help"])
        assert flag in capsys.readouterr().out
