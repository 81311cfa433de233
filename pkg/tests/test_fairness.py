import math

import pytest

from fairvol.dist import Gaussian
from fairvol.fairness import (
    QUANTITIES,
    CondPr,
    FairnessProblem,
    Gt,
    PAnd,
    PNot,
    POr,
    Pr,
    ProbConst,
    ProbOp,
    TraceRecord,
    Verdict,
    build_quantities,
    decide,
    eval_pexp,
    fair_verify,
    group_fairness_post,
    interval_of,
    post_bounds,
    prob_terms,
    ratio_bounds,
    rewrite_conditionals,
)
from fairvol.lang import load_problem, parse_problem, parse_program
from fairvol.logic.formula import TRUE, LinExpr, conj
from fairvol.pvc import generate_pvc
from fairvol.volume import BoundPair

from conftest import BENCH, requires_solver

INF = math.inf
a, b = LinExpr.var("a") > 0, LinExpr.var("b") > 0


def _bp(lo, hi):
    return BoundPair(lo, hi)


# -- ratio interval ---------------------------------------------------------------------------


def test_ratio_bounds_by_hand():
    # lo = 0.1 * 0.6 / (0.5 * 0.3) = 0.4, hi = 0.2 * 0.7 / (0.4 * 0.2) = 1.75
    lo, hi = ratio_bounds(_bp(0.1, 0.2), _bp(0.4, 0.5), _bp(0.6, 0.7), _bp(0.2, 0.3))
    assert lo == pytest.approx(0.4)
    assert hi == pytest.approx(1.75)


def test_ratio_bounds_worked_case():
    # lo = .2 * .45 / (.5 * .6) = .09 / .3, hi = .3 * .55 / (.4 * .5) = .165 / .2
    lo, hi = ratio_bounds(_bp(0.2, 0.3), _bp(0.4, 0.5), _bp(0.45, 0.55), _bp(0.5, 0.6))
    assert lo == pytest.approx(0.3)
    assert hi == pytest.approx(0.825)


def test_ratio_bounds_equal_exact_pairs():
    assert ratio_bounds(*(_bp(0.37, 0.37),) * 4) == pytest.approx((1.0, 1.0))


def test_ratio_bounds_point_intervals():
    lo, hi = ratio_bounds(_bp(0.3, 0.3), _bp(0.5, 0.5), _bp(0.5, 0.5), _bp(0.4, 0.4))
    assert lo == pytest.approx(0.75) and hi == pytest.approx(0.75)


def test_ratio_bounds_zero_denominators():
    # a denominator whose lower bound is 0 leaves the ratio unbounded above
    lo, hi = ratio_bounds(_bp(0.1, 0.2), _bp(0.0, 0.5), _bp(0.6, 0.7), _bp(0.2, 0.3))
    assert hi == INF and lo == pytest.approx(0.4)
    lo, hi = ratio_bounds(_bp(0.0, 0.0), _bp(0.0, 0.0), _bp(0.0, 0.0), _bp(0.0, 0.0))
    assert (lo, hi) == (0.0, INF)


def test_ratio_bounds_enclose_every_point():
    boxes = (_bp(0.1, 0.2), _bp(0.4, 0.5), _bp(0.6, 0.7), _bp(0.2, 0.3))
    lo, hi = ratio_bounds(*boxes)
    for i in range(16):
        pick = [bx.upper if (i >> k) & 1 else bx.lower for k, bx in enumerate(boxes)]
        r = pick[0] * pick[2] / (pick[1] * pick[3])
        assert lo - 1e-12 <= r <= hi + 1e-12


def test_decide():
    assert decide(0.9, 1.2, 0.15) == "FAIR"
    assert decide(0.5, 0.8, 0.15) == "UNFAIR"
    assert decide(0.8, 0.9, 0.15) == "UNKNOWN"
    # the boundary 1 - eps is not fair but is unfair
    assert decide(0.85, 0.85, 0.15) == "UNFAIR"
    assert decide(0.0, INF, 0.15) == "UNKNOWN"


def test_verdict_rendering():
    assert str(Verdict("FAIR", 0.9, 1.1)) == "FAIR"
    assert str(Verdict("UNKNOWN", 0.0, INF)) == "UNKNOWN lo=0 hi=inf"
    with pytest.raises(ValueError):
        Verdict("MAYBE", 0, 1)


def test_trace_record_json_encodes_infinity():
    rec = TraceRecord(1, {"minority": _bp(0.1, 0.2)}, (0.0, INF), 4, 0.5)
    assert rec.to_json()["ratio"] == [0.0, "inf"]
    assert rec.to_json()["bounds"]["minority"] == [0.1, 0.2]


# -- postconditions ---------------------------------------------------------------------------


def test_gt_three_valued():
    assert eval_pexp(Gt(Pr(a), ProbConst(0.5)), {a: _bp(0.6, 0.6)}) is True
    assert eval_pexp(Gt(Pr(a), ProbConst(0.5)), {a: _bp(0.4, 0.6)}) is None
    assert eval_pexp(Gt(Pr(a), ProbConst(0.5)), {a: _bp(0.3, 0.5)}) is False


def test_kleene_connectives():
    t = Gt(ProbConst(1), ProbConst(0))
    f = Gt(ProbConst(0), ProbConst(1))
    u = Gt(Pr(a), ProbConst(0.5))
    bounds = {a: _bp(0.4, 0.6)}
    assert eval_pexp(PAnd(t, u), bounds) is None
    assert eval_pexp(PAnd(f, u), bounds) is False
    assert eval_pexp(POr(t, u), bounds) is True
    assert eval_pexp(POr(f, u), bounds) is None
    assert eval_pexp(PNot(u), bounds) is None
    assert eval_pexp(PNot(t), bounds) is False


def test_conditional_rewrites_to_quotient():
    e = rewrite_conditionals(CondPr(a, b))
    assert e == ProbOp("/", Pr(conj(a, b)), Pr(b))
    assert prob_terms(Gt(CondPr(a, b), ProbConst(0.5))) == {conj(a, b), b}


def test_interval_arithmetic():
    bounds = {a: _bp(0.2, 0.4), b: _bp(0.5, 0.5)}
    assert interval_of(ProbOp("+", Pr(a), Pr(b)), bounds) == pytest.approx((0.7, 0.9))
    assert interval_of(ProbOp("-", Pr(a), Pr(b)), bounds) == pytest.approx((-0.3, -0.1))
    assert interval_of(ProbOp("*", Pr(a), Pr(b)), bounds) == pytest.approx((0.1, 0.2))
    assert interval_of(ProbOp("/", Pr(a), Pr(b)), bounds) == pytest.approx((0.4, 0.8))
    lo, hi = interval_of(ProbOp("/", Pr(a), Pr(b)), {a: _bp(0.2, 0.4), b: _bp(0.0, 0.5)})
    assert lo == pytest.approx(0.4) and hi == INF


def test_unknown_operator_rejected():
    with pytest.raises(ValueError):
        ProbOp("^", ProbConst(1), ProbConst(2))


# -- quantities -----------------------------------------------------------------------------------


def _problem(qualified=None, sensitive="x > 0"):
    src = "x ~ gauss(0,1)\ny ~ gauss(0,1)\n"
    src += f"sensitiveAttribute({sensitive})\nfairnessTarget(y > x)\n"
    if qualified:
        src += f"qualified({qualified})\n"
    return FairnessProblem.from_problem(parse_problem(src))


def test_quantities_without_qualification():
    p = _problem()
    q = build_quantities(p)
    assert tuple(q) == QUANTITIES
    assert q["minority"] == p.sensitive
    assert q["target_minority"] == conj(p.target, p.sensitive)


def test_hiring_quantities():
    p = FairnessProblem.from_problem(load_problem(BENCH / "hiring.fair"))
    q = build_quantities(p)
    hire, minority = p.target, p.sensitive
    assert p.qualified == TRUE
    assert q["target_minority"] == conj(hire, minority)
    assert q["minority"] == minority
    assert q["majority"] == ~minority
    assert q["target_majority"] == conj(hire, ~minority)


def test_quantities_with_qualification():
    p = _problem(qualified="y > -1")
    q = build_quantities(p)
    assert q["minority"] == conj(p.sensitive, p.qualified)


def test_missing_marker_is_reported():
    with pytest.raises(ValueError, match="fairnessTarget"):
        FairnessProblem.from_problem(parse_problem("x ~ gauss(0,1)\nsensitiveAttribute(x > 0)\n"))
    with pytest.raises(ValueError, match="sensitiveAttribute"):
        FairnessProblem.from_problem(parse_problem("x ~ gauss(0,1)\nfairnessTarget(x > 0)\n"))


def test_epsilon_priority():
    src = "# epsilon: 0.3\nx ~ gauss(0,1)\nsensitiveAttribute(x > 0)\nfairnessTarget(x > 1)\n"
    assert FairnessProblem.from_problem(parse_problem(src)).epsilon == 0.3
    assert FairnessProblem.from_problem(parse_problem(src), epsilon=0.05).epsilon == 0.05
    with pytest.raises(ValueError):
        FairnessProblem.from_problem(parse_problem(src), epsilon=1.0)


def test_post_bounds_key_by_event():
    p = _problem()
    bounds = {k: _bp(0.25, 0.25) for k in QUANTITIES}
    keyed = post_bounds(p, bounds)
    assert prob_terms(group_fairness_post(p)) <= set(keyed)


# -- verification -----------------------------------------------------------------------------------


@requires_solver
@pytest.mark.parametrize(
    "name, expected",
    [("hiring", "UNFAIR"), ("hiring_weighted_experience", "FAIR"), ("svm4a_independent", "FAIR")],
)
def test_fixture_verdicts(name, expected):
    problem = load_problem(BENCH / f"{name}.fair")
    assert problem.directives["expect"] == expected
    p = FairnessProblem.from_problem(problem)
    result = fair_verify(p, timeout=300)
    assert result.verdict.kind == expected
    # the postcondition agrees with the verdict under the final bounds
    truth = eval_pexp(group_fairness_post(p), post_bounds(p, result.bounds))
    assert truth is (expected == "FAIR")


@requires_solver
def test_trace_is_monotone():
    p = FairnessProblem.from_problem(load_problem(BENCH / "hiring.fair"))
    result = fair_verify(p, timeout=300)
    assert [r.round for r in result.trace] == list(range(1, result.rounds + 1))
    for prev, cur in zip(result.trace, result.trace[1:]):
        for k in QUANTITIES:
            assert cur.bounds[k].lower >= prev.bounds[k].lower
            assert cur.bounds[k].upper <= prev.bounds[k].upper
        assert cur.queries >= prev.queries


@requires_solver
def test_independent_target_is_fair():
    # target independent of the sensitive attribute: ratio exactly 1
    p = _problem()
    p = FairnessProblem(p.pvc, p.sensitive, p.qualified, LinExpr.var("y") > 0, 0.1)
    assert fair_verify(p, timeout=120).verdict.kind == "FAIR"


@requires_solver
def test_trivial_sensitive_attribute_stays_unknown():
    # with S true the majority has probability 0, so the ratio is unbounded
    pvc = generate_pvc(parse_program("x ~ gauss(0,1)\n"))
    assert pvc.densities == {"x": Gaussian(0, 1)}
    p = FairnessProblem(pvc, TRUE, TRUE, LinExpr.var("x") > 0, 0.1)
    result = fair_verify(p, max_rounds=10)
    assert result.verdict.kind == "UNKNOWN"
    assert result.verdict.ratio_upper == INF
    assert result.bounds["majority"] == BoundPair(0.0, 0.0)


@requires_solver
def test_zero_rounds_is_unknown():
    p = _problem()
    result = fair_verify(p, max_rounds=0)
    assert str(result.verdict) == "UNKNOWN lo=0 hi=inf"
    assert result.trace == [] and result.rounds == 0
