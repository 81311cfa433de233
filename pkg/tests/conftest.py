import shutil
from pathlib import Path

import pytest

from fairvol.logic.formula import Not, conj, disj, free_vars, is_quantifier_free
from fairvol.smt import SolverSession

BENCH = Path(__file__).resolve().parent.parent / "benchmarks"

# criterion number -> (passed, detail), filled by test_acceptance
ACCEPTANCE: dict = {}

requires_solver = pytest.mark.skipif(shutil.which("z3") is None, reason="z3 binary not on PATH")


def satisfiable(f) -> bool:
    with SolverSession(quantified=not is_quantifier_free(f)) as s:
        return s.check_and_model(f, sorted(free_vars(f))) is not None


def valid(f) -> bool:
    return not satisfiable(Not(f))


def equivalent(f, g) -> bool:
    """No model of ``f xor g``."""
    return not satisfiable(disj(conj(f, Not(g)), conj(Not(f), g)))


@pytest.fixture
def session():
    with SolverSession() as s:
        yield s


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance")
    for n in range(1, 8):
        if n in ACCEPTANCE:
            ok, detail = ACCEPTANCE[n]
            terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} ({detail})")
        else:
            terminalreporter.write_line(f"criterion {n}: NOT RUN")
