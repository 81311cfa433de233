"""Group-fairness verification by bounding four joint probabilities.

The fairness ratio ``Pr[F | S and Q] / Pr[F | not S and Q]`` is rewritten
into joint probabilities::

    ratio = Pr[F and S and Q] * Pr[not S and Q] / (Pr[S and Q] * Pr[F and not S and Q])

Each joint probability gets a lower and an upper sampler (eight in total).
After every round the interval of the ratio is compared against ``1 - eps``.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

from .lang.parser import Problem
from .lang.ssa import to_ssa
from .logic.formula import TRUE, Formula, Not, conj, nnf, rename
from .pvc import Projection, Projector, Pvc, compose, generate_pvc, parse_formula
from .smt import SolverError, SolverSpawnError
from .volume import BoundPair, BoundRunner, SamplerConfig

log = logging.getLogger(__name__)

INF = math.inf


# ---------------------------------------------------------------------------
# problems


@dataclass
class FairnessProblem:
    """A closed program with sensitive, qualification and target events.

    ``names`` maps source variable names to their final SSA versions, so
    events written against the source can be evaluated on the program.
    """

    pvc: Pvc
    sensitive: Formula
    qualified: Formula
    target: Formula
    epsilon: float = 0.15
    name: str = "problem"
    names: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 <= self.epsilon < 1:
            raise ValueError("epsilon must lie in [0, 1)")

    @classmethod
    def from_problem(cls, problem: Problem, epsilon: Optional[float] = None) -> "FairnessProblem":
        pvc, names = closed_pvc(problem)
        markers = pvc.markers
        for kind, call in (("sensitive", "sensitiveAttribute"), ("target", "fairnessTarget")):
            if kind not in markers:
                raise ValueError(f"program has no {call}(...) marker")
        if epsilon is None:
            epsilon = float(problem.directives.get("epsilon", 0.15))
        return cls(
            pvc,
            markers["sensitive"],
            markers.get("qualified", TRUE),
            markers["target"],
            epsilon,
            problem.directives.get("name", problem.pre.name or "problem"),
            names,
        )


def closed_pvc(problem: Problem) -> tuple:
    """Verification condition of the closed program and the final-version map."""
    pre = to_ssa(problem.pre)
    pre_pvc = generate_pvc(pre)
    names = dict(pre.versions or {})
    if problem.dec is None:
        return pre_pvc, names
    dec = to_ssa(problem.dec)
    dec_pvc = generate_pvc(dec)
    outputs = [pre.latest(p) for p, _ in problem.links]
    inputs = [d for _, d in problem.links]
    for orig, final in (dec.versions or {}).items():
        if orig not in inputs:
            names[orig] = final
    return compose(pre_pvc, dec_pvc, outputs, inputs), names


def event_of(text: str, names: Mapping[str, str], bool_defs: Optional[Mapping] = None) -> Formula:
    """Parse an event over source names and rename to final versions."""
    defs = {k: bool_defs[v] for k, v in names.items() if bool_defs and v in bool_defs}
    return rename(parse_formula(text, defs), dict(names))


# ---------------------------------------------------------------------------
# quantities

QUANTITIES = ("target_minority", "minority", "majority", "target_majority")


def build_quantities(p: FairnessProblem) -> dict:
    """The four joint events, keyed by :data:`QUANTITIES`."""
    s, q, f = p.sensitive, p.qualified, p.target
    not_s = nnf(Not(s))
    return {
        "target_minority": conj(f, s, q),
        "minority": conj(s, q),
        "majority": conj(not_s, q),
        "target_majority": conj(f, not_s, q),
    }


def project_quantities(p: FairnessProblem, cap: Optional[int] = None) -> dict:
    """Each quantity projected onto the sampled variables."""
    projector = Projector(p.pvc) if cap is None else Projector(p.pvc, cap)
    return {k: projector.project(f) for k, f in build_quantities(p).items()}


# ---------------------------------------------------------------------------
# interval arithmetic


def _mul(a: float, b: float) -> float:
    # 0 * inf is 0 here: a zero probability bound stays zero
    if a == 0 or b == 0:
        return 0.0
    return a * b


def _div(a: float, b: float) -> float:
    if b == 0:
        return INF if a > 0 else (-INF if a < 0 else 0.0)
    if math.isinf(b):
        return 0.0 if not math.isinf(a) else math.copysign(INF, a) * math.copysign(1, b)
    return a / b


def ratio_bounds(n1: BoundPair, d1: BoundPair, n2: BoundPair, d2: BoundPair) -> tuple:
    """Interval of ``(n1 * n2) / (d1 * d2)`` for nonnegative bounded factors.

    A zero denominator makes the lower end 0 and the upper end infinite.
    """
    lo_den = d1.upper * d2.upper
    lo = 0.0 if lo_den == 0 else (n1.lower * n2.lower) / lo_den
    hi_den = d1.lower * d2.lower
    hi = INF if hi_den == 0 else (n1.upper * n2.upper) / hi_den
    return lo, hi


def fairness_ratio(bounds: Mapping[str, BoundPair]) -> tuple:
    return ratio_bounds(
        bounds["target_minority"], bounds["minority"], bounds["majority"], bounds["target_majority"]
    )


# ---------------------------------------------------------------------------
# verdicts


@dataclass(frozen=True)
class Verdict:
    """``FAIR``, ``UNFAIR`` or ``UNKNOWN`` with the final ratio interval."""

    kind: str
    ratio_lower: float
    ratio_upper: float

    def __post_init__(self):
        if self.kind not in ("FAIR", "UNFAIR", "UNKNOWN"):
            raise ValueError(f"bad verdict kind {self.kind!r}")

    def __str__(self) -> str:
        if self.kind == "UNKNOWN":
            return f"UNKNOWN lo={_fmt(self.ratio_lower)} hi={_fmt(self.ratio_upper)}"
        return self.kind


def _fmt(x: float) -> str:
    if math.isinf(x):
        return "inf"
    return f"{x:.6g}"


def decide(lo: float, hi: float, epsilon: float) -> str:
    """Lower-bound test first, then the upper-bound test."""
    if lo > 1 - epsilon:
        return "FAIR"
    if hi <= 1 - epsilon:
        return "UNFAIR"
    return "UNKNOWN"


@dataclass(frozen=True)
class TraceRecord:
    round: int
    bounds: dict
    ratio: tuple
    queries: int
    elapsed: float

    def to_json(self) -> dict:
        return {
            "round": self.round,
            "bounds": {k: [_num(b.lower), _num(b.upper)] for k, b in self.bounds.items()},
            "ratio": [_num(self.ratio[0]), _num(self.ratio[1])],
            "queries": self.queries,
            "elapsed": round(self.elapsed, 6),
        }


def _num(x: float):
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


@dataclass
class VerifyResult:
    verdict: Verdict
    bounds: dict
    rounds: int
    queries: int
    elapsed: float
    trace: list
    error: Optional[str] = None


def fair_verify(
    p: FairnessProblem,
    config: Optional[SamplerConfig] = None,
    timeout: Optional[float] = 900.0,
    max_rounds: Optional[int] = None,
    on_round: Optional[Callable[[TraceRecord], None]] = None,
    projections: Optional[Mapping[str, Projection]] = None,
) -> VerifyResult:
    """Advance all eight samplers round by round until a verdict or the budget ends.

    Solver failures stop the run with ``UNKNOWN`` and the bounds reached so far.
    """
    config = config or SamplerConfig()
    start = time.monotonic()
    trace: list = []
    projections = projections or project_quantities(p, config.dnf_cap)
    runners = {}
    for k in QUANTITIES:
        pr = projections[k]
        runners[k] = BoundRunner(pr.formula, p.pvc.densities, config, pr.vars, pr.dnf, pr.neg_dnf)
    rounds, error = 0, None

    def snapshot() -> dict:
        return {k: r.bounds for k, r in runners.items()}

    def queries() -> int:
        return sum(r.queries() for r in runners.values())

    try:
        bounds = snapshot()
        lo, hi = fairness_ratio(bounds)
        kind = "UNKNOWN"
        while True:
            if max_rounds is not None and rounds >= max_rounds:
                break
            if timeout is not None and time.monotonic() - start > timeout:
                break
            if all(r.exhausted for r in runners.values()):
                break
            try:
                for k in QUANTITIES:
                    runners[k].round()
            except SolverSpawnError:
                raise
            except SolverError as exc:
                error = str(exc)
                log.warning("solver failure, stopping: %s", exc)
                break
            rounds += 1
            bounds = snapshot()
            lo, hi = fairness_ratio(bounds)
            rec = TraceRecord(rounds, bounds, (lo, hi), queries(), time.monotonic() - start)
            trace.append(rec)
            if on_round is not None:
                on_round(rec)
            kind = decide(lo, hi, p.epsilon)
            if kind != "UNKNOWN":
                break
        bounds = snapshot()
        lo, hi = fairness_ratio(bounds)
        if error is None:
            kind = decide(lo, hi, p.epsilon)
        else:
            kind = "UNKNOWN"
        return VerifyResult(Verdict(kind, lo, hi), bounds, rounds, queries(), time.monotonic() - start, trace, error)
    finally:
        for r in runners.values():
            r.close()


# ---------------------------------------------------------------------------
# probabilistic postconditions


@dataclass(frozen=True)
class Pr:
    event: Formula


@dataclass(frozen=True)
class CondPr:
    event: Formula
    given: Formula


@dataclass(frozen=True)
class ProbConst:
    value: float


@dataclass(frozen=True)
class ProbOp:
    op: str
    left: object
    right: object

    def __post_init__(self):
        if self.op not in "+-*/" or len(self.op) != 1:
            raise ValueError(f"unknown operator {self.op!r}")


@dataclass(frozen=True)
class Gt:
    left: object
    right: object


@dataclass(frozen=True)
class PAnd:
    left: object
    right: object


@dataclass(frozen=True)
class POr:
    left: object
    right: object


@dataclass(frozen=True)
class PNot:
    arg: object


def rewrite_conditionals(e):
    """Replace ``Pr[a | b]`` by ``Pr[a and b] / Pr[b]``."""
    if isinstance(e, CondPr):
        return ProbOp("/", Pr(conj(e.event, e.given)), Pr(e.given))
    if isinstance(e, ProbOp):
        return ProbOp(e.op, rewrite_conditionals(e.left), rewrite_conditionals(e.right))
    if isinstance(e, (Gt, PAnd, POr)):
        return type(e)(rewrite_conditionals(e.left), rewrite_conditionals(e.right))
    if isinstance(e, PNot):
        return PNot(rewrite_conditionals(e.arg))
    return e


def prob_terms(e) -> set:
    """Events of all ``Pr[.]`` leaves after rewriting conditionals."""
    e = rewrite_conditionals(e)
    out: set = set()

    def visit(x):
        if isinstance(x, Pr):
            out.add(x.event)
        elif isinstance(x, (ProbOp, Gt, PAnd, POr)):
            visit(x.left)
            visit(x.right)
        elif isinstance(x, PNot):
            visit(x.arg)

    visit(e)
    return out


def interval_of(e, bounds: Mapping[Formula, BoundPair]) -> tuple:
    """Interval of a probability expression."""
    if isinstance(e, Pr):
        b = bounds[e.event]
        return b.lower, b.upper
    if isinstance(e, ProbConst):
        return float(e.value), float(e.value)
    if isinstance(e, CondPr):
        return interval_of(rewrite_conditionals(e), bounds)
    if not isinstance(e, ProbOp):
        raise TypeError(f"not a probability expression: {e!r}")
    a, b = interval_of(e.left, bounds), interval_of(e.right, bounds)
    if e.op == "+":
        return a[0] + b[0], a[1] + b[1]
    if e.op == "-":
        return a[0] - b[1], a[1] - b[0]
    if e.op == "*":
        ps = [_mul(x, y) for x in a for y in b]
        return min(ps), max(ps)
    return _interval_div(a, b)


def _interval_div(a: tuple, b: tuple) -> tuple:
    if b[0] > 0 or b[1] < 0:
        qs = [_div(x, y) for x in a for y in b]
        return min(qs), max(qs)
    if a[0] >= 0 and b[0] >= 0:
        # nonnegative quotient whose denominator may vanish
        return (0.0 if b[1] == 0 else _div(a[0], b[1])), INF
    return -INF, INF


def eval_pexp(e, bounds: Mapping[Formula, BoundPair]) -> Optional[bool]:
    """Three-valued truth of a postcondition: True, False, or None for unknown."""
    if isinstance(e, Gt):
        a, b = interval_of(e.left, bounds), interval_of(e.right, bounds)
        if a[0] > b[1]:
            return True
        if a[1] <= b[0]:
            return False
        return None
    if isinstance(e, PNot):
        v = eval_pexp(e.arg, bounds)
        return None if v is None else not v
    if isinstance(e, PAnd):
        x, y = eval_pexp(e.left, bounds), eval_pexp(e.right, bounds)
        if x is False or y is False:
            return False
        return True if (x and y) else None
    if isinstance(e, POr):
        x, y = eval_pexp(e.left, bounds), eval_pexp(e.right, bounds)
        if x is True or y is True:
            return True
        return False if (x is False and y is False) else None
    raise TypeError(f"not a postcondition: {e!r}")


def group_fairness_post(p: FairnessProblem):
    """``Pr[F | S and Q] / Pr[F | not S and Q] > 1 - eps``."""
    not_s = nnf(Not(p.sensitive))
    ratio = ProbOp(
        "/",
        CondPr(p.target, conj(p.sensitive, p.qualified)),
        CondPr(p.target, conj(not_s, p.qualified)),
    )
    return Gt(ratio, ProbConst(1 - p.epsilon))


def post_bounds(p: FairnessProblem, bounds: Mapping[str, BoundPair]) -> dict:
    """Quantity bounds keyed by the event formulas used in :func:`group_fairness_post`."""
    events = build_quantities(p)
    return {events[k]: b for k, b in bounds.items()}


__all__ = [
    "CondPr",
    "FairnessProblem",
    "Gt",
    "PAnd",
    "PNot",
    "POr",
    "Pr",
    "ProbConst",
    "ProbOp",
    "QUANTITIES",
    "TraceRecord",
    "Verdict",
    "VerifyResult",
    "build_quantities",
    "closed_pvc",
    "decide",
    "eval_pexp",
    "event_of",
    "fair_verify",
    "fairness_ratio",
    "group_fairness_post",
    "interval_of",
    "post_bounds",
    "prob_terms",
    "project_quantities",
    "ratio_bounds",
    "rewrite_conditionals",
]
