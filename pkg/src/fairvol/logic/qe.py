"""Quantifier elimination for linear real arithmetic.

Existential blocks are eliminated disjunct by disjunct: the body is put in
disjunctive normal form, equalities are solved for the quantified variables
and the remaining inequalities go through Fourier-Motzkin with strictness
tracking.  Universal blocks use ``forall x. f == not exists x. not f``.
All arithmetic is exact.
"""

from __future__ import annotations

from typing import Iterable, Optional, Sequence

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
    make_atom,
    nnf,
)

DEFAULT_DNF_CAP = 20_000

Conj = tuple  # tuple of Atom, read as a conjunction


class QeBudgetExceeded(RuntimeError):
    """Raised when a DNF expansion would exceed the configured disjunct cap."""


# ---------------------------------------------------------------------------
# conjunctions of atoms


def _opposite(coeffs: tuple) -> tuple:
    return tuple((v, -c) for v, c in coeffs)


def simplify_conj(atoms: Iterable[Formula]) -> Optional[Conj]:
    """Deduplicate and tighten parallel bounds.

    Returns ``None`` when a cheap check already shows the conjunction is
    unsatisfiable.  The result is sorted so equal conjunctions compare equal.
    """
    upper: dict = {}  # coeffs -> (bound, strict)
    equal: dict = {}
    for a in atoms:
        if a == TRUE:
            continue
        if a == FALSE:
            return None
        if a.op == "=":
            prev = equal.get(a.coeffs)
            if prev is not None and prev != a.bound:
                return None
            equal[a.coeffs] = a.bound
            continue
        strict = a.op == "<"
        prev = upper.get(a.coeffs)
        if prev is None or a.bound < prev[0] or (a.bound == prev[0] and strict):
            upper[a.coeffs] = (a.bound, strict)

    # an equality c.x = e settles both c.x <= b and -c.x <= b'
    for coeffs, e in equal.items():
        for key, value in ((coeffs, e), (_opposite(coeffs), -e)):
            hit = upper.pop(key, None)
            if hit is not None:
                b, strict = hit
                if value > b or (value == b and strict):
                    return None
    for coeffs, (b, strict) in upper.items():
        other = upper.get(_opposite(coeffs))
        if other is None:
            continue
        # c.x <= b and c.x >= -b2
        b2, strict2 = other
        if -b2 > b or (-b2 == b and (strict or strict2)):
            return None
    out = [Atom(c, "=", e) for c, e in equal.items()]
    out += [Atom(c, "<" if s else "<=", b) for c, (b, s) in upper.items()]
    out.sort(key=_atom_key)
    return tuple(out)


def _atom_key(a: Atom):
    return (a.coeffs, a.op, a.bound)


def _substitute_conj(atoms: Sequence[Atom], name: str, expr: LinExpr) -> list:
    out = []
    for a in atoms:
        if name in a.vars:
            out.append(atom(a.lhs().substitute({name: expr}), a.op, a.bound))
        else:
            out.append(a)
    return out


def _solve_for(a: Atom, name: str) -> LinExpr:
    """Solve the equality ``a`` for ``name``."""
    c = a.coeff(name)
    rest = LinExpr({v: k for v, k in a.coeffs if v != name})
    return (LinExpr.constant(a.bound) - rest).scale(1 / c)


def _fm_step(atoms: Sequence[Atom], name: str) -> list:
    lower, upper, keep = [], [], []
    for a in atoms:
        c = a.coeff(name)
        if c > 0:
            upper.append(a)
        elif c < 0:
            lower.append(a)
        else:
            keep.append(a)
    for p in upper:
        cp = p.coeff(name)
        for n in lower:
            cn = -n.coeff(name)
            # cn * p + cp * n cancels `name`
            lhs = p.lhs().scale(cn) + n.lhs().scale(cp)
            bound = p.bound * cn + n.bound * cp
            op = "<" if "<" in (p.op, n.op) else "<="
            keep.append(atom(lhs, op, bound))
    return keep


def _pick_var(atoms: Sequence[Atom], names: Iterable[str]) -> str:
    best, best_cost = None, None
    for name in sorted(names):
        pos = sum(1 for a in atoms if a.coeff(name) > 0)
        neg = sum(1 for a in atoms if a.coeff(name) < 0)
        cost = pos * neg - pos - neg
        if best_cost is None or cost < best_cost:
            best, best_cost = name, cost
    return best


def project_conj(atoms: Iterable[Formula], names: Iterable[str]) -> Optional[Conj]:
    """Eliminate ``names`` from a conjunction; ``None`` if it is unsatisfiable."""
    current = simplify_conj(atoms)
    if current is None:
        return None
    todo = set(names)
    # equalities first: exact substitution never grows the system
    changed = True
    while changed:
        changed = False
        for a in current:
            if a.op != "=":
                continue
            hit = sorted(a.vars & todo)
            if not hit:
                continue
            name = hit[0]
            expr = _solve_for(a, name)
            rest = [b for b in current if b is not a]
            current = simplify_conj(_substitute_conj(rest, name, expr))
            if current is None:
                return None
            todo.discard(name)
            changed = True
            break
    # split remaining equalities mentioning quantified vars into two bounds
    split = []
    for a in current:
        if a.op == "=" and a.vars & todo:
            split.append(make_atom(dict(a.coeffs), "<=", a.bound))
            split.append(make_atom(dict(a.coeffs), ">=", a.bound))
        else:
            split.append(a)
    current = simplify_conj(split)
    if current is None:
        return None
    todo &= set().union(*(a.vars for a in current)) if current else set()
    while todo:
        name = _pick_var(current, todo)
        current = simplify_conj(_fm_step(current, name))
        if current is None:
            return None
        todo.discard(name)
        todo &= set().union(*(a.vars for a in current)) if current else set()
    return current


def conj_satisfiable(atoms: Iterable[Formula]) -> bool:
    atoms = list(atoms)
    names = set()
    for a in atoms:
        if isinstance(a, Atom):
            names |= a.vars
    return project_conj(atoms, names) is not None


# ---------------------------------------------------------------------------
# disjunctive normal form


def to_dnf(f: Formula, cap: int = DEFAULT_DNF_CAP, exact: bool = True) -> list:
    """DNF of a quantifier-free formula as a list of conjunctions.

    Conjunctions that are cheaply contradictory are pruned while expanding.
    With ``exact`` set, a full feasibility check removes every unsatisfiable
    disjunct at the end, so an empty list means the formula is unsatisfiable.
    """
    result = _dnf(nnf(f), cap)
    if exact:
        result = [d for d in result if conj_satisfiable(d)]
    return result


def _dnf(f: Formula, cap: int) -> list:
    if isinstance(f, Const):
        return [()] if f.value else []
    if isinstance(f, Atom):
        return [(f,)]
    if isinstance(f, Or):
        out, seen = [], set()
        for g in f.args:
            for d in _dnf(g, cap):
                if d not in seen:
                    seen.add(d)
                    out.append(d)
            if len(out) > cap:
                raise QeBudgetExceeded(f"DNF exceeds {cap} disjuncts")
        return out
    if isinstance(f, And):
        # expand small children first so contradictions prune early
        parts = sorted((_dnf(g, cap) for g in f.args), key=len)
        out = [()]
        for part in parts:
            if not part:
                return []
            nxt, seen = [], set()
            for left in out:
                for right in part:
                    merged = simplify_conj(left + right)
                    if merged is None or merged in seen:
                        continue
                    seen.add(merged)
                    nxt.append(merged)
                    if len(nxt) > cap:
                        raise QeBudgetExceeded(f"DNF exceeds {cap} disjuncts")
            out = nxt
            if not out:
                return []
        return out
    raise ValueError(f"expected a quantifier-free NNF formula, got {type(f).__name__}")


def dnf_formula(dnf: Iterable[Conj]) -> Formula:
    return disj(*(conj(*d) for d in dnf))


# ---------------------------------------------------------------------------
# quantifier elimination


def eliminate_exists(names: Iterable[str], body: Formula, cap: int = DEFAULT_DNF_CAP) -> Formula:
    """Quantifier-free equivalent of ``exists names. body`` (body must be QF)."""
    names = tuple(names)
    out = []
    seen = set()
    for d in to_dnf(body, cap, exact=False):
        projected = project_conj(d, names)
        if projected is None or projected in seen:
            continue
        if not projected:
            return TRUE
        seen.add(projected)
        out.append(conj(*projected))
    return disj(*out)


def eliminate_quantifiers(f: Formula, cap: int = DEFAULT_DNF_CAP) -> Formula:
    """Return an equivalent quantifier-free formula.

    Raises :class:`QeBudgetExceeded` if some DNF expansion exceeds ``cap``.
    """
    if isinstance(f, (Atom, Const)):
        return f
    if isinstance(f, And):
        return conj(*(eliminate_quantifiers(g, cap) for g in f.args))
    if isinstance(f, Or):
        return disj(*(eliminate_quantifiers(g, cap) for g in f.args))
    if isinstance(f, Not):
        return negate_formula(eliminate_quantifiers(f.arg, cap))
    if isinstance(f, Exists):
        return eliminate_exists(f.vars, eliminate_quantifiers(f.body, cap), cap)
    if isinstance(f, Forall):
        inner = negate_formula(eliminate_quantifiers(f.body, cap))
        return negate_formula(eliminate_exists(f.vars, inner, cap))
    raise TypeError(f"not a formula: {f!r}")


def negate_formula(f: Formula) -> Formula:
    """Full negation of a quantifier-free formula, in NNF."""
    return nnf(Not(f))
