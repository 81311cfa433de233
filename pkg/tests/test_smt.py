import math
from fractions import Fraction

import pytest

from fairvol.logic.boxes import Hyperrectangle, block, decompose, endpoint_assignment
from fairvol.logic.formula import LinExpr, conj, evaluate, exists, make_atom
from fairvol.smt import (
    SolverSession,
    SolverSpawnError,
    extend_bound,
    objective_of,
    parse_sexpr,
    resolve_solver,
    value_of,
)

from conftest import requires_solver, satisfiable

pytestmark = requires_solver

x, y = LinExpr.var("x"), LinExpr.var("y")
INF = math.inf


def test_parse_sexpr_and_values():
    assert parse_sexpr("((x (/ 1.0 3.0)) (y (- 2.0)))") == [["x", ["/", "1.0", "3.0"]], ["y", ["-", "2.0"]]]
    assert value_of(["/", "1.0", "3.0"]) == Fraction(1, 3)
    assert value_of(["-", "2.0"]) == -2
    assert value_of("0.25") == Fraction(1, 4)


def test_objective_terms():
    assert objective_of("oo").infinite == 1
    eps = objective_of(["+", "10.0", ["*", ["-", "1.0"], "epsilon"]])
    assert eps.value == 10 and eps.epsilon


def test_check_and_model_in_open_interval(session):
    m = session.check_and_model(conj(x > 0, x < 1), ["x"])
    assert 0 < m["x"] < 1
    assert isinstance(m["x"], Fraction)


def test_check_and_model_unsat(session):
    assert session.check_and_model(conj(x > 0, x < 0), ["x"]) is None


def test_check_and_model_is_scoped(session):
    session.check_and_model(x > 5, ["x"])
    assert session.depth == 0
    assert session.check_and_model(x < 0, ["x"]) is not None


def test_existentials_are_skolemized(session):
    session.add(exists(["y"], conj(x >= y, y >= 3)))
    assert session.check_and_model(x < 3, ["x"]) is None
    assert session.check_and_model(x >= 3, ["x"]) is not None


def test_push_pop_balance(session):
    session.push()
    session.add(x > 1)
    session.push()
    assert session.depth == 2
    session.pop()
    session.pop()
    assert session.depth == 0
    with pytest.raises(Exception):
        session.pop()


def test_blocked_model_is_disjoint(session):
    dec = decompose(conj(x >= y, y >= 0), ["x", "y"])
    h = Hyperrectangle.from_dict({"x": (3, 4), "y": (1, 2)})
    session.add(dec.formula)
    session.add(block(h, dec))
    m = session.check_and_model(None, dec.endpoint_names)
    other = Hyperrectangle.from_dict(
        {"x": (m["__l_x"], m["__u_x"]), "y": (m["__l_y"], m["__u_y"])}
    )
    assert not satisfiable(conj(other.to_formula(), h.to_formula()))


def test_restart_replays_assertions(session):
    session.add(x > 2)
    session.push()
    session.add(x < 3)
    before = session.check_and_model(None, ["x"])
    session.restart()
    after = session.check_and_model(None, ["x"])
    assert 2 < before["x"] < 3 and 2 < after["x"] < 3
    assert session.stats.restarts == 1
    assert session.check_and_model(x >= 3, ["x"]) is None


def test_crash_triggers_restart(session):
    session.add(x > 2)
    session._proc.kill()
    session._proc.wait()
    assert session.check_and_model(x < 2, ["x"]) is None
    assert session.stats.restarts == 1


def test_stats_count_queries(session):
    session.check_and_model(x > 0, ["x"])
    session.check_and_model(x > 1, ["x"])
    assert session.stats.queries == 2


def test_missing_binary_raises_spawn_error():
    with pytest.raises(SolverSpawnError):
        resolve_solver("/nonexistent/solver")


def test_environment_override(monkeypatch):
    monkeypatch.setenv("FAIRVOL_SOLVER", "/nonexistent/solver")
    with pytest.raises(SolverSpawnError):
        SolverSession()


# -- extension ---------------------------------------------------------------------------


def _extend(phi, names, box, dim, direction, objectives=True):
    dec = decompose(phi, names)
    h = Hyperrectangle.from_dict(box)
    with SolverSession() as s:
        s.add(dec.formula)
        return extend_bound(s, list(dec.qf.args), h, dim, direction, dec, use_objectives=objectives), dec


@pytest.mark.parametrize("objectives", [True, False])
def test_extend_to_box_edge(objectives):
    end, _ = _extend(conj(x >= 0, x <= 10), ["x"], {"x": (2, 3)}, "x", "upper", objectives)
    assert end == 10


@pytest.mark.parametrize("objectives", [True, False])
def test_extend_unbounded(objectives):
    end, dec = _extend(conj(x >= y, y >= 0), ["x", "y"], {"x": (3, 4), "y": (1, 2)}, "x", "upper", objectives)
    assert end == INF
    # probe: the decomposition holds for arbitrarily large upper ends
    for big in (10**3, 10**9, 10**15):
        env = endpoint_assignment(Hyperrectangle.from_dict({"x": (3, big), "y": (1, 2)}), dec)
        assert evaluate(dec.qf, env)


@pytest.mark.parametrize("objectives", [True, False])
def test_extend_lower_edge(objectives):
    end, _ = _extend(conj(x >= y, y >= 0), ["x", "y"], {"x": (3, 4), "y": (1, 2)}, "x", "lower", objectives)
    assert end == 2


@pytest.mark.parametrize("objectives", [True, False])
def test_extend_strict_edge_backs_off(objectives):
    end, _ = _extend(conj(x >= 0, x < 10), ["x"], {"x": (2, 3)}, "x", "upper", objectives)
    assert 10 - Fraction(10, 2**19) <= end < 10


@pytest.mark.parametrize("objectives", [True, False])
def test_extend_stops_at_blocked_neighbor(objectives):
    dec = decompose(conj(x >= 0, x <= 10), ["x"])
    blocker = block(Hyperrectangle.from_dict({"x": (6, 7)}), dec)
    h = Hyperrectangle.from_dict({"x": (2, 3)})
    with SolverSession() as s:
        s.add(dec.formula)
        s.add(blocker)
        end = extend_bound(s, [dec.qf, blocker], h, "x", "upper", dec, use_objectives=objectives)
    assert end < 6
    grown = Hyperrectangle.from_dict({"x": (2, end)})
    assert not satisfiable(conj(grown.to_formula(), Hyperrectangle.from_dict({"x": (6, 7)}).to_formula()))


def test_extension_result_satisfies_constraints():
    phi = conj(x + y <= 4, x >= 0, y >= 0)
    dec = decompose(phi, ["x", "y"])
    h = Hyperrectangle.from_dict({"x": (0, 1), "y": (0, 1)})
    with SolverSession() as s:
        s.add(dec.formula)
        end = extend_bound(s, list(dec.qf.args), h, "x", "upper", dec)
        grown = h.with_bound("x", hi=end)
        assert end == 3
        assert s.check_and_model(
            conj(*(make_atom({n: 1}, "=", v) for n, v in endpoint_assignment(grown, dec).items())), []
        ) is not None
