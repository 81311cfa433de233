"""Verification conditions of loop-free probabilistic programs.

``generate_pvc`` turns an SSA program into a quantifier-free formula over
its variables plus the density of every sampled variable; each model of the
formula, restricted to the sampled variables, is one execution.  Boolean
program variables are not part of the formula: their definitions are kept
separately and inlined wherever they are read.

A :class:`Projector` solves the deterministic variables path by path, so an
event over any program variables becomes an equivalent formula over the
sampled variables only.  Because deterministic variables are functions of
the sampled ones, the complement of the projected event is the projection
of the complement, which gives the negated form without a second
quantifier elimination.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from .lang.ast import (
    Assign,
    BinOp,
    BoolConst,
    BoolOp,
    Cmp,
    Cond,
    Marker,
    Neg,
    NotExpr,
    Num,
    ParseError,
    ProbAssign,
    Program,
    Var,
)
from .lang.parser import parse_expression
from .lang.ssa import is_ssa, to_ssa
from .logic.formula import (
    FALSE,
    TRUE,
    Formula,
    LinExpr,
    Not,
    atom,
    conj,
    disj,
    exists,
    free_vars,
    ite,
    nnf,
    smt_symbol,
    substitute,
    to_smtlib,
)
from .logic.qe import DEFAULT_DNF_CAP, project_conj, to_dnf


class NonLinearError(ParseError):
    """Expression outside linear real arithmetic."""


@dataclass(frozen=True)
class Pvc:
    """Formula over program variables, densities of sampled ones, and the rest."""

    phi: Formula
    densities: dict
    det_vars: frozenset
    bool_defs: dict = field(default_factory=dict, compare=False)
    markers: dict = field(default_factory=dict, compare=False)

    @property
    def prob_vars(self) -> frozenset:
        return frozenset(self.densities)


# ---------------------------------------------------------------------------
# expressions to formulas


def linear(e, bool_defs: Optional[Mapping] = None) -> LinExpr:
    """Affine form of an arithmetic expression; rejects non-linear terms."""
    if isinstance(e, Num):
        return LinExpr.constant(e.value)
    if isinstance(e, Var):
        if bool_defs and e.name in bool_defs:
            raise NonLinearError(f"boolean variable {e.name!r} used as a number", e.line, 1)
        return LinExpr.var(e.name)
    if isinstance(e, Neg):
        return -linear(e.arg, bool_defs)
    if isinstance(e, BinOp):
        a, b = linear(e.left, bool_defs), linear(e.right, bool_defs)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            if not (a.is_constant() or b.is_constant()):
                raise NonLinearError("product of two variables is not linear", e.line, 1)
            return a * b
        if not b.is_constant():
            raise NonLinearError("division by a variable is not linear", e.line, 1)
        if b.const == 0:
            raise NonLinearError("division by zero", e.line, 1)
        return a / b
    raise NonLinearError(f"expected an arithmetic expression, got {type(e).__name__}", 0, 0)


_CMP = {"<": "<", "<=": "<=", ">": ">", ">=": ">=", "==": "="}


def formula_of(e, bool_defs: Optional[Mapping] = None) -> Formula:
    """Formula of a condition; boolean variables are replaced by their definitions."""
    bool_defs = bool_defs or {}
    if isinstance(e, BoolConst):
        return TRUE if e.value else FALSE
    if isinstance(e, Cmp):
        left, right = linear(e.left, bool_defs), linear(e.right, bool_defs)
        if e.op == "!=":
            return disj(atom(left, "<", right), atom(left, ">", right))
        return atom(left, _CMP[e.op], right)
    if isinstance(e, BoolOp):
        parts = [formula_of(a, bool_defs) for a in e.args]
        return conj(*parts) if e.op == "and" else disj(*parts)
    if isinstance(e, NotExpr):
        return nnf(Not(formula_of(e.arg, bool_defs)))
    if isinstance(e, Var):
        if e.name not in bool_defs:
            raise NonLinearError(f"variable {e.name!r} is not a condition", e.line, 1)
        return bool_defs[e.name]
    raise NonLinearError(f"expected a condition, got {type(e).__name__}", 0, 0)


def parse_formula(text: str, bool_defs: Optional[Mapping] = None) -> Formula:
    """Parse a condition written in the model language (e.g. ``z >= 0``)."""
    return formula_of(parse_expression(text), bool_defs)


# ---------------------------------------------------------------------------
# generation


def generate_pvc(p: Program) -> Pvc:
    """Verification condition of ``p`` (converted to SSA first if needed)."""
    if p.versions is None and not is_ssa(p):
        p = to_ssa(p)
    bools = p.bool_vars
    densities: dict = {}
    sites: dict = {v: [] for v in bools}
    defs: dict = {}
    markers: dict = {}

    def resolved() -> dict:
        for v in bools:
            defs[v] = disj(*sites[v])
        return defs

    def gen(stmts, path: Formula) -> Formula:
        parts = []
        for s in stmts:
            if isinstance(s, Assign):
                if s.var in bools:
                    sites[s.var].append(conj(path, formula_of(s.expr, resolved())))
                else:
                    parts.append(atom(LinExpr.var(s.var), "=", linear(s.expr, bools)))
            elif isinstance(s, ProbAssign):
                densities[s.var] = s.dist
            elif isinstance(s, Cond):
                b = formula_of(s.cond, resolved())
                nb = nnf(Not(b))
                parts.append(ite(b, gen(s.then, conj(path, b)), gen(s.orelse, conj(path, nb))))
            elif isinstance(s, Marker):
                markers[s.kind] = formula_of(s.expr, resolved())
        return conj(*parts)

    phi = gen(p.statements, TRUE)
    resolved()
    det = frozenset((p.all_vars - set(densities)) - bools)
    return Pvc(phi, densities, det, dict(defs), markers)


def compose(pre: Pvc, dec: Pvc, pre_outputs: Sequence[str], dec_inputs: Sequence[str]) -> Pvc:
    """Join a population model with a decision program fed from its outputs."""
    if len(pre_outputs) != len(dec_inputs):
        raise ValueError(f"arity mismatch: {len(pre_outputs)} outputs vs {len(dec_inputs)} inputs")
    pre_vars = set(pre.densities) | set(pre.det_vars) | set(pre.bool_defs)
    dec_vars = (set(dec.densities) | set(dec.det_vars) | set(dec.bool_defs)) - set(dec_inputs)
    clash = pre_vars & (dec_vars | set(dec_inputs))
    if clash:
        raise ValueError(f"overlapping variable names: {sorted(clash)}")
    links = [atom(LinExpr.var(i), "=", LinExpr.var(o)) for o, i in zip(pre_outputs, dec_inputs)]
    return Pvc(
        conj(pre.phi, dec.phi, *links),
        {**pre.densities, **dec.densities},
        frozenset(pre.det_vars | dec.det_vars | set(dec_inputs)),
        {**pre.bool_defs, **dec.bool_defs},
        {**pre.markers, **dec.markers},
    )


def event_formula(pvc: Pvc, phi: Formula) -> Formula:
    """``exists V_d. phi_P and phi``; the quantifier is kept structurally."""
    body = conj(pvc.phi, phi)
    return exists(sorted(pvc.det_vars & free_vars(body)), body)


def dump_smtlib(pvc: Pvc) -> str:
    """SMT-LIB 2 text of the formula with the densities as comments."""
    lines = ["(set-logic QF_LRA)"]
    for v, d in sorted(pvc.densities.items()):
        lines.append(f"; density {v}: {d}")
    for v in sorted(free_vars(pvc.phi) | set(pvc.densities)):
        lines.append(f"(declare-const {smt_symbol(v)} Real)")
    lines.append(f"(assert {to_smtlib(pvc.phi)})")
    for kind, f in sorted(pvc.markers.items()):
        lines.append(f"; {kind}: {to_smtlib(f)}")
    lines.append("(check-sat)")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# projection onto sampled variables


@dataclass(frozen=True)
class Projection:
    """An event over sampled variables in positive and complemented DNF."""

    formula: Formula
    dnf: list
    neg_dnf: list

    @property
    def vars(self) -> tuple:
        names = set()
        for d in list(self.dnf) + list(self.neg_dnf):
            for a in d:
                names |= a.vars
        return tuple(sorted(names))


class Projector:
    """Per-path solutions of the deterministic variables of a Pvc."""

    def __init__(self, pvc: Pvc, cap: int = DEFAULT_DNF_CAP):
        self.pvc = pvc
        self.cap = cap
        self.paths = []
        for d in to_dnf(pvc.phi, cap):
            guard, defs = _solve_path(d, pvc.det_vars)
            if guard is not None:
                self.paths.append((guard, defs))

    def substitute(self, phi: Formula) -> list:
        """``[(guard, phi with the path's definitions)]`` for every path."""
        out = []
        for guard, defs in self.paths:
            out.append((guard, substitute(phi, defs)))
        return out

    def project(self, phi: Formula) -> Projection:
        pos, neg = [], []
        for guard, body in self.substitute(phi):
            pos += _path_dnf(guard, body, self.cap)
            neg += _path_dnf(guard, nnf(Not(body)), self.cap)
        left = {v for d in pos + neg for a in d for v in a.vars} & set(self.pvc.det_vars)
        if left:
            raise ValueError(f"event mentions variables with no definition: {sorted(left)}")
        return Projection(disj(*(conj(*d) for d in pos)), pos, neg)


def _solve_path(atoms, det_vars) -> tuple:
    """Split a path into a guard over sampled variables and definitions."""
    current = list(atoms)
    defs: dict = {}
    progress = True
    while progress:
        progress = False
        for a in current:
            if a.op != "=":
                continue
            targets = sorted(a.vars & set(det_vars))
            if not targets:
                continue
            name = targets[0]
            c = a.coeff(name)
            rest = LinExpr({v: k for v, k in a.coeffs if v != name})
            expr = (LinExpr.constant(a.bound) - rest).scale(1 / c)
            defs = {k: v.substitute({name: expr}) for k, v in defs.items()}
            defs[name] = expr
            current = [
                b for b in (substitute(b, {name: expr}) for b in current if b is not a) if b != TRUE
            ]
            if FALSE in current:
                return None, {}
            progress = True
            break
    guard = project_conj(current, ())
    if guard is None:
        return None, {}
    return conj(*guard), defs


def _path_dnf(guard: Formula, body: Formula, cap: int) -> list:
    return to_dnf(conj(guard, body), cap)


__all__ = [
    "NonLinearError",
    "Projection",
    "Projector",
    "Pvc",
    "compose",
    "dump_smtlib",
    "event_formula",
    "formula_of",
    "generate_pvc",
    "linear",
    "parse_formula",
]
