"""Linear real arithmetic formulas with exact rational coefficients.

Atoms are kept in a canonical form ``sum(c_i * x_i) op bound`` with
``op`` one of ``<``, ``<=`` or ``=``; ``>``/``>=`` are folded in by negating
both sides.  Inequalities are scaled so the first coefficient has absolute
value one and equalities so that it is exactly one, which makes parallel
constraints directly comparable.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Union

import numpy as np

Number = Union[int, Fraction]

_OPS = ("<", "<=", "=", ">=", ">")


def as_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ValueError(f"non-finite constant {value!r}")
        return Fraction(value)
    return Fraction(value)


class LinExpr:
    """An affine expression ``sum(coeffs[v] * v) + const``."""

    __slots__ = ("coeffs", "const")

    def __init__(self, coeffs: Mapping[str, Number] | None = None, const: Number = 0):
        self.coeffs = {v: as_fraction(c) for v, c in (coeffs or {}).items() if c != 0}
        self.const = as_fraction(const)

    @classmethod
    def var(cls, name: str) -> "LinExpr":
        return cls({name: 1})

    @classmethod
    def constant(cls, value: Number) -> "LinExpr":
        return cls({}, value)

    @classmethod
    def lift(cls, value) -> "LinExpr":
        if isinstance(value, LinExpr):
            return value
        if isinstance(value, str):
            return cls.var(value)
        return cls.constant(value)

    def is_constant(self) -> bool:
        return not self.coeffs

    def __add__(self, other):
        other = LinExpr.lift(other)
        coeffs = dict(self.coeffs)
        for v, c in other.coeffs.items():
            coeffs[v] = coeffs.get(v, 0) + c
        return LinExpr(coeffs, self.const + other.const)

    __radd__ = __add__

    def __neg__(self):
        return LinExpr({v: -c for v, c in self.coeffs.items()}, -self.const)

    def __sub__(self, other):
        return self + (-LinExpr.lift(other))

    def __rsub__(self, other):
        return LinExpr.lift(other) - self

    def scale(self, k: Number) -> "LinExpr":
        k = as_fraction(k)
        return LinExpr({v: c * k for v, c in self.coeffs.items()}, self.const * k)

    def __mul__(self, other):
        other = LinExpr.lift(other)
        if other.is_constant():
            return self.scale(other.const)
        if self.is_constant():
            return other.scale(self.const)
        raise ValueError("product of two non-constant expressions is not linear")

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = LinExpr.lift(other)
        if not other.is_constant() or other.const == 0:
            raise ValueError("division by a non-constant or zero expression")
        return self.scale(1 / other.const)

    # comparisons build atoms; equality is spelled ``eq`` so LinExpr stays comparable
    def __le__(self, other):
        return atom(self, "<=", other)

    def __lt__(self, other):
        return atom(self, "<", other)

    def __ge__(self, other):
        return atom(self, ">=", other)

    def __gt__(self, other):
        return atom(self, ">", other)

    def eq(self, other):
        return atom(self, "=", other)

    def substitute(self, mapping: Mapping[str, "LinExpr"]) -> "LinExpr":
        out = LinExpr({}, self.const)
        for v, c in self.coeffs.items():
            if v in mapping:
                out = out + mapping[v].scale(c)
            else:
                out = out + LinExpr({v: c})
        return out

    def evaluate(self, env: Mapping[str, Number]) -> Fraction:
        return self.const + sum((c * as_fraction(env[v]) for v, c in self.coeffs.items()), Fraction(0))

    def __repr__(self):
        return f"LinExpr({format_terms(tuple(sorted(self.coeffs.items())), self.const)})"


def var(name: str) -> LinExpr:
    return LinExpr.var(name)


# ---------------------------------------------------------------------------
# formula nodes


class Formula:
    """Base class; ``&``, ``|`` and ``~`` build simplified connectives."""

    __slots__ = ()

    def __and__(self, other):
        return conj(self, other)

    def __or__(self, other):
        return disj(self, other)

    def __invert__(self):
        return negate(self)

    def __str__(self):
        return to_text(self)


@dataclass(frozen=True, eq=True)
class Const(Formula):
    value: bool

    def __repr__(self):
        return "TRUE" if self.value else "FALSE"


TRUE = Const(True)
FALSE = Const(False)


@dataclass(frozen=True, eq=True)
class Atom(Formula):
    """``sum(coeffs) op bound`` in canonical form (see module docstring)."""

    coeffs: tuple  # sorted ((var, Fraction), ...)
    op: str  # '<', '<=', '='
    bound: Fraction

    @property
    def vars(self) -> frozenset:
        return frozenset(v for v, _ in self.coeffs)

    def coeff(self, name: str) -> Fraction:
        for v, c in self.coeffs:
            if v == name:
                return c
        return Fraction(0)

    def lhs(self) -> LinExpr:
        return LinExpr(dict(self.coeffs))

    def __repr__(self):
        return f"Atom({format_terms(self.coeffs)} {self.op} {self.bound})"


@dataclass(frozen=True, eq=True)
class And(Formula):
    args: tuple


@dataclass(frozen=True, eq=True)
class Or(Formula):
    args: tuple


@dataclass(frozen=True, eq=True)
class Not(Formula):
    arg: Formula


@dataclass(frozen=True, eq=True)
class Exists(Formula):
    vars: tuple
    body: Formula


@dataclass(frozen=True, eq=True)
class Forall(Formula):
    vars: tuple
    body: Formula


def make_atom(coeffs: Mapping[str, Fraction], op: str, bound: Fraction) -> Formula:
    """Canonicalize ``coeffs . x op bound``; constant atoms fold to TRUE/FALSE."""
    if op not in _OPS:
        raise ValueError(f"unknown comparison {op!r}")
    items = sorted((v, as_fraction(c)) for v, c in coeffs.items() if c != 0)
    bound = as_fraction(bound)
    if op in (">", ">="):
        items = [(v, -c) for v, c in items]
        bound = -bound
        op = "<" if op == ">" else "<="
    if not items:
        zero = Fraction(0)
        holds = {"<": zero < bound, "<=": zero <= bound, "=": zero == bound}[op]
        return TRUE if holds else FALSE
    lead = items[0][1]
    k = 1 / lead if op == "=" else 1 / abs(lead)
    if k != 1:
        items = [(v, c * k) for v, c in items]
        bound = bound * k
    return Atom(tuple(items), op, bound)


def atom(lhs, op: str, rhs=0) -> Formula:
    diff = LinExpr.lift(lhs) - LinExpr.lift(rhs)
    return make_atom(diff.coeffs, op, -diff.const)


def conj(*args: Formula) -> Formula:
    out = []
    for f in args:
        if isinstance(f, And):
            out.extend(f.args)
        elif f == TRUE:
            continue
        elif f == FALSE:
            return FALSE
        else:
            out.append(f)
    if not out:
        return TRUE
    if len(out) == 1:
        return out[0]
    return And(tuple(out))


def disj(*args: Formula) -> Formula:
    out = []
    for f in args:
        if isinstance(f, Or):
            out.extend(f.args)
        elif f == FALSE:
            continue
        elif f == TRUE:
            return TRUE
        else:
            out.append(f)
    if not out:
        return FALSE
    if len(out) == 1:
        return out[0]
    return Or(tuple(out))


def conj_all(fs: Iterable[Formula]) -> Formula:
    return conj(*fs)


def disj_all(fs: Iterable[Formula]) -> Formula:
    return disj(*fs)


def negate_atom(a: Atom) -> Formula:
    neg = {v: -c for v, c in a.coeffs}
    if a.op == "<":
        return make_atom(neg, "<=", -a.bound)
    if a.op == "<=":
        return make_atom(neg, "<", -a.bound)
    return disj(make_atom(dict(a.coeffs), "<", a.bound), make_atom(neg, "<", -a.bound))


def negate(f: Formula) -> Formula:
    """Negation pushed one level down (atoms flip, connectives dualize)."""
    if isinstance(f, Const):
        return FALSE if f.value else TRUE
    if isinstance(f, Atom):
        return negate_atom(f)
    if isinstance(f, Not):
        return f.arg
    if isinstance(f, And):
        return disj(*(negate(a) for a in f.args))
    if isinstance(f, Or):
        return conj(*(negate(a) for a in f.args))
    return Not(f)


def implies(a: Formula, b: Formula) -> Formula:
    return disj(negate(a), b)


def ite(c: Formula, a: Formula, b: Formula) -> Formula:
    """``(c and a) or (not c and b)``; equivalent to the implication form."""
    return disj(conj(c, a), conj(negate(c), b))


def exists(vs: Iterable[str], body: Formula) -> Formula:
    vs = tuple(v for v in vs if v in free_vars(body))
    if not vs:
        return body
    return Exists(vs, body)


def forall(vs: Iterable[str], body: Formula) -> Formula:
    vs = tuple(v for v in vs if v in free_vars(body))
    if not vs:
        return body
    return Forall(vs, body)


# ---------------------------------------------------------------------------
# traversals


def free_vars(f: Formula) -> frozenset:
    if isinstance(f, Atom):
        return f.vars
    if isinstance(f, Const):
        return frozenset()
    if isinstance(f, (And, Or)):
        out = set()
        for a in f.args:
            out |= free_vars(a)
        return frozenset(out)
    if isinstance(f, Not):
        return free_vars(f.arg)
    if isinstance(f, (Exists, Forall)):
        return free_vars(f.body) - set(f.vars)
    raise TypeError(f"not a formula: {f!r}")


def atoms_of(f: Formula):
    if isinstance(f, Atom):
        yield f
    elif isinstance(f, (And, Or)):
        for a in f.args:
            yield from atoms_of(a)
    elif isinstance(f, Not):
        yield from atoms_of(f.arg)
    elif isinstance(f, (Exists, Forall)):
        yield from atoms_of(f.body)


def is_quantifier_free(f: Formula) -> bool:
    if isinstance(f, (Exists, Forall)):
        return False
    if isinstance(f, (And, Or)):
        return all(is_quantifier_free(a) for a in f.args)
    if isinstance(f, Not):
        return is_quantifier_free(f.arg)
    return True


def substitute(f: Formula, mapping: Mapping[str, LinExpr]) -> Formula:
    """Replace free variables by affine expressions (bound variables untouched)."""
    if isinstance(f, Atom):
        if not (f.vars & mapping.keys()):
            return f
        return atom(f.lhs().substitute(mapping), f.op, f.bound)
    if isinstance(f, Const):
        return f
    if isinstance(f, And):
        return conj(*(substitute(a, mapping) for a in f.args))
    if isinstance(f, Or):
        return disj(*(substitute(a, mapping) for a in f.args))
    if isinstance(f, Not):
        return Not(substitute(f.arg, mapping))
    if isinstance(f, (Exists, Forall)):
        inner = {k: v for k, v in mapping.items() if k not in f.vars}
        return type(f)(f.vars, substitute(f.body, inner))
    raise TypeError(f"not a formula: {f!r}")


def rename(f: Formula, names: Mapping[str, str]) -> Formula:
    return substitute(f, {old: LinExpr.var(new) for old, new in names.items()})


def nnf(f: Formula) -> Formula:
    """Negation normal form; quantifiers are kept (negation moves through them)."""
    if isinstance(f, (Atom, Const)):
        return f
    if isinstance(f, And):
        return conj(*(nnf(a) for a in f.args))
    if isinstance(f, Or):
        return disj(*(nnf(a) for a in f.args))
    if isinstance(f, Exists):
        return Exists(f.vars, nnf(f.body))
    if isinstance(f, Forall):
        return Forall(f.vars, nnf(f.body))
    g = f.arg
    if isinstance(g, Atom):
        return negate_atom(g)
    if isinstance(g, Const):
        return FALSE if g.value else TRUE
    if isinstance(g, Not):
        return nnf(g.arg)
    if isinstance(g, And):
        return disj(*(nnf(Not(a)) for a in g.args))
    if isinstance(g, Or):
        return conj(*(nnf(Not(a)) for a in g.args))
    if isinstance(g, Exists):
        return Forall(g.vars, nnf(Not(g.body)))
    if isinstance(g, Forall):
        return Exists(g.vars, nnf(Not(g.body)))
    raise TypeError(f"not a formula: {f!r}")


def _compare(lhs, op: str, rhs) -> bool:
    if op == "<":
        return lhs < rhs
    if op == "<=":
        return lhs <= rhs
    return lhs == rhs


def evaluate(f: Formula, env: Mapping[str, Number]) -> bool:
    """Truth value of a quantifier-free formula under an exact assignment."""
    if isinstance(f, Atom):
        total = sum((c * as_fraction(env[v]) for v, c in f.coeffs), Fraction(0))
        return _compare(total, f.op, f.bound)
    if isinstance(f, Const):
        return f.value
    if isinstance(f, And):
        return all(evaluate(a, env) for a in f.args)
    if isinstance(f, Or):
        return any(evaluate(a, env) for a in f.args)
    if isinstance(f, Not):
        return not evaluate(f.arg, env)
    raise ValueError("cannot evaluate a quantified formula")


def evaluate_array(f: Formula, env: Mapping[str, np.ndarray]) -> np.ndarray:
    """Vectorized float evaluation (used by the Monte Carlo oracle)."""
    if isinstance(f, Atom):
        total = None
        for v, c in f.coeffs:
            term = float(c) * np.asarray(env[v], dtype=float)
            total = term if total is None else total + term
        b = float(f.bound)
        if f.op == "<":
            return total < b
        if f.op == "<=":
            return total <= b
        return total == b
    if isinstance(f, Const):
        n = len(next(iter(env.values()))) if env else 1
        return np.full(n, f.value, dtype=bool)
    if isinstance(f, And):
        out = evaluate_array(f.args[0], env)
        for a in f.args[1:]:
            out = out & evaluate_array(a, env)
        return out
    if isinstance(f, Or):
        out = evaluate_array(f.args[0], env)
        for a in f.args[1:]:
            out = out | evaluate_array(a, env)
        return out
    if isinstance(f, Not):
        return ~evaluate_array(f.arg, env)
    raise ValueError("cannot evaluate a quantified formula")


def size(f: Formula) -> int:
    if isinstance(f, (Atom, Const)):
        return 1
    if isinstance(f, (And, Or)):
        return 1 + sum(size(a) for a in f.args)
    if isinstance(f, Not):
        return 1 + size(f.arg)
    return 1 + size(f.body)


# ---------------------------------------------------------------------------
# printing

_SIMPLE_SYMBOL = re.compile(r"^[A-Za-z~!@$%^&*_+=<>.?/\-][A-Za-z0-9~!@$%^&*_+=<>.?/\-]*$")


def smt_symbol(name: str) -> str:
    if _SIMPLE_SYMBOL.match(name):
        return name
    return "|" + name.replace("|", "_") + "|"


def smt_number(q) -> str:
    q = as_fraction(q)
    mag = abs(q)
    if mag.denominator == 1:
        text = f"{mag.numerator}.0"
    else:
        text = f"(/ {mag.numerator}.0 {mag.denominator}.0)"
    return f"(- {text})" if q < 0 else text


def _smt_term(coeffs) -> str:
    parts = []
    for v, c in coeffs:
        sym = smt_symbol(v)
        parts.append(sym if c == 1 else f"(* {smt_number(c)} {sym})")
    return parts[0] if len(parts) == 1 else "(+ " + " ".join(parts) + ")"


def to_smtlib(f: Formula) -> str:
    if isinstance(f, Atom):
        return f"({f.op} {_smt_term(f.coeffs)} {smt_number(f.bound)})"
    if isinstance(f, Const):
        return "true" if f.value else "false"
    if isinstance(f, And):
        return "(and " + " ".join(to_smtlib(a) for a in f.args) + ")"
    if isinstance(f, Or):
        return "(or " + " ".join(to_smtlib(a) for a in f.args) + ")"
    if isinstance(f, Not):
        return f"(not {to_smtlib(f.arg)})"
    kw = "exists" if isinstance(f, Exists) else "forall"
    binders = " ".join(f"({smt_symbol(v)} Real)" for v in f.vars)
    return f"({kw} ({binders}) {to_smtlib(f.body)})"


def format_terms(coeffs, const: Fraction = Fraction(0)) -> str:
    parts = []
    for v, c in coeffs:
        if c == 1:
            piece = v
        elif c == -1:
            piece = f"-{v}"
        else:
            piece = f"{c}*{v}"
        parts.append(piece)
    if const or not parts:
        parts.append(str(const))
    return " + ".join(parts).replace("+ -", "- ")


def to_text(f: Formula) -> str:
    if isinstance(f, Atom):
        return f"{format_terms(f.coeffs)} {f.op} {f.bound}"
    if isinstance(f, Const):
        return "true" if f.value else "false"
    if isinstance(f, And):
        return "(" + " & ".join(to_text(a) for a in f.args) + ")"
    if isinstance(f, Or):
        return "(" + " | ".join(to_text(a) for a in f.args) + ")"
    if isinstance(f, Not):
        return f"!{to_text(f.arg)}"
    kw = "exists" if isinstance(f, Exists) else "forall"
    return f"{kw} {', '.join(f.vars)}. {to_text(f.body)}"
