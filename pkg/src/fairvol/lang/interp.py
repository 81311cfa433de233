"""Reference interpreter and Monte Carlo estimation.

``interpret`` executes a program on explicit per-site value queues: each
sampling site consumes the next value of its own queue whenever it runs.
Unassigned variables read as zero.  ``monte_carlo`` runs many executions at
once with numpy; every site draws one value per execution, and conditionals
evaluate both branches and select per execution.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Union

import numpy as np

from ..logic.formula import Formula, evaluate_array
from .ast import (
    Assign,
    BinOp,
    BoolConst,
    BoolOp,
    Cmp,
    Cond,
    Neg,
    NotExpr,
    Num,
    ProbAssign,
    Program,
    Var,
    walk,
)


class OmegaUnderflow(RuntimeError):
    """A sampling site ran out of pre-drawn values."""


@dataclass
class OmegaSequences:
    """Pre-drawn values per sampling site (keyed by site id)."""

    queues: dict = field(default_factory=dict)
    seed: Optional[int] = None

    @classmethod
    def of(cls, values: Mapping[int, object]) -> "OmegaSequences":
        qs = {}
        for site, v in values.items():
            qs[site] = deque(v if isinstance(v, (list, tuple, np.ndarray)) else [v])
        return cls(qs)

    @classmethod
    def draw(cls, p: Program, seed: int, count: int = 1) -> "OmegaSequences":
        """``count`` values per site from each site's own distribution."""
        rng = np.random.default_rng(seed)
        qs = {}
        for s in sorted(p.sites, key=lambda s: s.site):
            qs[s.site] = deque(float(x) for x in s.dist.sample(rng, count))
        return cls(qs, seed)

    def copy(self) -> "OmegaSequences":
        return OmegaSequences({k: deque(v) for k, v in self.queues.items()}, self.seed)

    def pop(self, site: int) -> float:
        q = self.queues.get(site)
        if not q:
            raise OmegaUnderflow(f"no value left for sampling site {site}")
        return q.popleft()


def site_values(p: Program, values: Mapping[str, object]) -> OmegaSequences:
    """Build queues from values named by the sampled variable of each site."""
    out = {}
    for s in p.sites:
        if s.var in values:
            out[s.site] = values[s.var]
    return OmegaSequences.of(out)


# ---------------------------------------------------------------------------
# scalar interpreter


def eval_expr(e, state: Mapping):
    if isinstance(e, Num):
        return float(e.value)
    if isinstance(e, Var):
        return state.get(e.name, 0.0)
    if isinstance(e, BoolConst):
        return e.value
    if isinstance(e, BinOp):
        a, b = eval_expr(e.left, state), eval_expr(e.right, state)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        return a / b
    if isinstance(e, Neg):
        return -eval_expr(e.arg, state)
    if isinstance(e, Cmp):
        a, b = eval_expr(e.left, state), eval_expr(e.right, state)
        return _compare(e.op, a, b)
    if isinstance(e, BoolOp):
        vals = [bool(eval_expr(a, state)) for a in e.args]
        return all(vals) if e.op == "and" else any(vals)
    if isinstance(e, NotExpr):
        return not eval_expr(e.arg, state)
    raise TypeError(f"not an expression: {e!r}")


def _compare(op: str, a, b):
    if op == "<":
        return a < b
    if op == "<=":
        return a <= b
    if op == ">":
        return a > b
    if op == ">=":
        return a >= b
    if op == "==":
        return a == b
    return a != b


def interpret(p: Program, omega: OmegaSequences, inputs: Optional[Mapping] = None) -> dict:
    """Final state of one execution; ``omega`` is not consumed (a copy is used)."""
    queues = omega.copy()
    state = dict(inputs or {})
    _run(p.statements, state, queues)
    return state


def _run(stmts, state: dict, omega: OmegaSequences):
    for s in stmts:
        if isinstance(s, Assign):
            state[s.var] = eval_expr(s.expr, state)
        elif isinstance(s, ProbAssign):
            state[s.var] = omega.pop(s.site)
        elif isinstance(s, Cond):
            _run(s.then if eval_expr(s.cond, state) else s.orelse, state, omega)


def final_values(p: Program, state: Mapping) -> dict:
    """Values of the original variable names (latest versions for SSA programs)."""
    if p.versions is None:
        return dict(state)
    return {orig: state.get(name, 0.0) for orig, name in p.versions.items()}


# ---------------------------------------------------------------------------
# vectorized execution


def eval_expr_array(e, state: Mapping, n: int):
    if isinstance(e, Num):
        return np.full(n, float(e.value))
    if isinstance(e, Var):
        v = state.get(e.name)
        return np.zeros(n) if v is None else v
    if isinstance(e, BoolConst):
        return np.full(n, e.value)
    if isinstance(e, BinOp):
        a, b = eval_expr_array(e.left, state, n), eval_expr_array(e.right, state, n)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        return a / b
    if isinstance(e, Neg):
        return -eval_expr_array(e.arg, state, n)
    if isinstance(e, Cmp):
        return _compare(e.op, eval_expr_array(e.left, state, n), eval_expr_array(e.right, state, n))
    if isinstance(e, BoolOp):
        vals = [np.asarray(eval_expr_array(a, state, n), dtype=bool) for a in e.args]
        out = vals[0]
        for v in vals[1:]:
            out = (out & v) if e.op == "and" else (out | v)
        return out
    if isinstance(e, NotExpr):
        return ~np.asarray(eval_expr_array(e.arg, state, n), dtype=bool)
    raise TypeError(f"not an expression: {e!r}")


def run_vectorized(p: Program, n: int, rng: np.random.Generator, inputs: Optional[Mapping] = None) -> dict:
    """Execute ``n`` independent runs; returns arrays per variable.

    Sites draw in program order (depth first, then before else), so a fixed
    generator state gives reproducible results.
    """
    state = {k: np.asarray(v, dtype=float) for k, v in (inputs or {}).items()}
    draws = {s.site: s.dist.sample(rng, n) for s in walk(p.statements) if isinstance(s, ProbAssign)}
    _run_vec(p.statements, state, draws, n)
    return state


def _run_vec(stmts, state: dict, draws: dict, n: int):
    for s in stmts:
        if isinstance(s, Assign):
            state[s.var] = eval_expr_array(s.expr, state, n)
        elif isinstance(s, ProbAssign):
            state[s.var] = draws[s.site]
        elif isinstance(s, Cond):
            mask = np.asarray(eval_expr_array(s.cond, state, n), dtype=bool)
            left, right = dict(state), dict(state)
            _run_vec(s.then, left, draws, n)
            _run_vec(s.orelse, right, draws, n)
            for name in set(left) | set(right):
                a, b = left.get(name), right.get(name)
                if a is b:
                    state[name] = a
                    continue
                a = np.zeros(n) if a is None else a
                b = np.zeros(n) if b is None else b
                state[name] = np.where(mask, a, b)


Event = Union[Formula, Callable, object]


def _event_mask(p: Program, event, state: dict, n: int) -> np.ndarray:
    env = dict(state)
    if p.versions is not None:
        for orig, name in p.versions.items():
            if name in state:
                env.setdefault(orig, state[name])
    if isinstance(event, Formula):
        return np.asarray(evaluate_array(event, env), dtype=bool) & np.ones(n, dtype=bool)
    if callable(event):
        return np.asarray(event(env), dtype=bool)
    return np.asarray(eval_expr_array(event, env, n), dtype=bool) & np.ones(n, dtype=bool)


def monte_carlo(p: Program, event, n: int, seed: int, batch: int = 200_000) -> tuple:
    """Fraction of ``n`` runs whose final state satisfies ``event``.

    ``event`` may be a logic formula, a language expression or a callable on
    the state arrays.  Returns ``(estimate, 1.96 * sqrt(est * (1 - est) / n))``.
    """
    if n < 1:
        raise ValueError("sample count must be positive")
    rng = np.random.default_rng(seed)
    hits, done = 0, 0
    while done < n:
        m = min(batch, n - done)
        state = run_vectorized(p, m, rng)
        hits += int(np.count_nonzero(_event_mask(p, event, state, m)))
        done += m
    est = hits / n
    return est, 1.96 * math.sqrt(est * (1 - est) / n)


__all__ = [
    "OmegaSequences",
    "OmegaUnderflow",
    "eval_expr",
    "eval_expr_array",
    "final_values",
    "interpret",
    "monte_carlo",
    "run_vectorized",
    "site_values",
]

