"""Evaluating endpoint constraints at infinity and exact 1-D box extension.

Box constraints are downward closed under inclusion: if a box satisfies
them, so does every box inside it.  Moving one endpoint with the others
fixed therefore meets an interval of admissible values that contains the
current one.  This module computes the end of that interval exactly.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .formula import (
    FALSE,
    TRUE,
    And,
    Atom,
    Const,
    Exists,
    Forall,
    Formula,
    LinExpr,
    Not,
    Or,
    atom,
    conj,
    disj,
)

STRICT_BACKOFF = Fraction(1, 2**20)


def _is_inf(v) -> bool:
    return isinstance(v, float) and math.isinf(v)


def limit_atom(a: Atom, values: Mapping) -> Formula:
    """Substitute ``values`` into ``a``; infinite values use limit semantics.

    An atom whose left side diverges to minus infinity holds in the limit,
    one diverging to plus infinity fails, and equalities fail.  Terms that
    diverge in both directions are treated as failing (the conservative side
    for constraints that must hold).
    """
    direction = 0
    finite = {}
    hit = False
    for v, c in a.coeffs:
        if v not in values:
            continue
        hit = True
        val = values[v]
        if _is_inf(val):
            s = (1 if c > 0 else -1) * (1 if val > 0 else -1)
            if direction and s != direction:
                return FALSE
            direction = s
        else:
            finite[v] = LinExpr.constant(val)
    if not hit:
        return a
    if direction:
        if a.op == "=":
            return FALSE
        return TRUE if direction < 0 else FALSE
    return atom(a.lhs().substitute(finite), a.op, a.bound)


def limit_substitute(f: Formula, values: Mapping) -> Formula:
    if isinstance(f, Atom):
        return limit_atom(f, values)
    if isinstance(f, Const):
        return f
    if isinstance(f, And):
        return conj(*(limit_substitute(g, values) for g in f.args))
    if isinstance(f, Or):
        return disj(*(limit_substitute(g, values) for g in f.args))
    if isinstance(f, Not):
        inner = limit_substitute(f.arg, values)
        return Not(inner) if not isinstance(inner, Const) else (FALSE if inner.value else TRUE)
    if isinstance(f, (Exists, Forall)):
        inner = {k: v for k, v in values.items() if k not in f.vars}
        return type(f)(f.vars, limit_substitute(f.body, inner))
    raise TypeError(f"not a formula: {f!r}")


# ---------------------------------------------------------------------------
# unions of intervals on the real line; an interval is (lo, lo_closed, hi, hi_closed)

EVERYTHING = [(-math.inf, False, math.inf, False)]


def _atom_interval(a: Atom, name: str) -> list:
    c = a.coeff(name)
    b = a.bound / c
    if a.op == "=":
        return [(b, True, b, True)]
    closed = a.op == "<="
    if c > 0:
        return [(-math.inf, False, b, closed)]
    return [(b, closed, math.inf, False)]


def _union(parts: Iterable[list]) -> list:
    items = sorted((iv for p in parts for iv in p), key=lambda iv: (iv[0], not iv[1]))
    out = []
    for lo, lc, hi, hc in items:
        if out:
            plo, plc, phi, phc = out[-1]
            if lo < phi or (lo == phi and (phc or lc)):
                if hi > phi or (hi == phi and hc):
                    out[-1] = (plo, plc, hi, hc)
                continue
        out.append((lo, lc, hi, hc))
    return out


def _intersect(a: list, b: list) -> list:
    out = []
    for alo, alc, ahi, ahc in a:
        for blo, blc, bhi, bhc in b:
            if alo > blo or (alo == blo and not alc):
                lo, lc = alo, alc
            else:
                lo, lc = blo, blc
            if ahi < bhi or (ahi == bhi and not ahc):
                hi, hc = ahi, ahc
            else:
                hi, hc = bhi, bhc
            if lo < hi or (lo == hi and lc and hc):
                out.append((lo, lc, hi, hc))
    return _union([out])


def interval_set(f: Formula, name: str) -> list:
    """Solutions of a quantifier-free NNF formula in the single variable ``name``."""
    if isinstance(f, Const):
        return list(EVERYTHING) if f.value else []
    if isinstance(f, Atom):
        return _atom_interval(f, name)
    if isinstance(f, Or):
        return _union(interval_set(g, name) for g in f.args)
    if isinstance(f, And):
        out = list(EVERYTHING)
        for g in f.args:
            out = _intersect(out, interval_set(g, name))
            if not out:
                break
        return out
    raise ValueError(f"expected a quantifier-free NNF formula, got {type(f).__name__}")


def _component(ivs: list, v0) -> tuple | None:
    for lo, lc, hi, hc in ivs:
        above = lo < v0 or (lo == v0 and lc)
        below = v0 < hi or (v0 == hi and hc)
        if above and below:
            return lo, lc, hi, hc
    return None


def _fast_true(clause: Formula, values: Mapping, name: str) -> bool:
    """Cheap check: some disjunct free of ``name`` already holds."""
    if not isinstance(clause, Or):
        return False
    for g in clause.args:
        if isinstance(g, Atom) and name not in g.vars:
            if limit_atom(g, values) == TRUE:
                return True
    return False


def extend_exact(clauses: Sequence[Formula], values: Mapping, name: str, upper: bool):
    """Farthest value of endpoint ``name`` keeping every clause true.

    ``values`` assigns every endpoint variable (``name`` included, at its
    current value).  When the extreme is an open end, the result backs off
    by a relative ``2**-20`` so it stays admissible.
    """
    v0 = values[name]
    if _is_inf(v0):
        return v0
    fixed = {k: v for k, v in values.items() if k != name}
    best, best_closed = (math.inf, False) if upper else (-math.inf, False)
    for clause in clauses:
        if _fast_true(clause, fixed, name):
            continue
        g = limit_substitute(clause, fixed)
        if g == TRUE:
            continue
        comp = _component(interval_set(g, name), v0)
        if comp is None:
            return v0  # current box already fails: leave it alone
        end, closed = (comp[2], comp[3]) if upper else (comp[0], comp[1])
        if (end < best) if upper else (end > best):
            best, best_closed = end, closed
        elif end == best:
            best_closed = best_closed and closed
    if _is_inf(best) or best_closed:
        return best
    step = STRICT_BACKOFF * max(1, abs(best))
    candidate = best - step if upper else best + step
    if (candidate < v0) if upper else (candidate > v0):
        return v0
    return candidate


__all__ = ["extend_exact", "interval_set", "limit_atom", "limit_substitute"]
