"""Syntax tree of the population-model / decision-program language."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Union

from ..dist import Distribution


class ParseError(ValueError):
    """Syntax or well-formedness error with a source position."""

    def __init__(self, message: str, line: int = 0, col: int = 0):
        where = f"line {line}, column {col}: " if line else ""
        super().__init__(where + message)
        self.message = message
        self.line = line
        self.col = col


# ---------------------------------------------------------------------------
# expressions


@dataclass(frozen=True)
class Num:
    value: Fraction


@dataclass(frozen=True)
class Var:
    name: str
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class BinOp:
    op: str  # + - * /
    left: "Expr"
    right: "Expr"
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class BoolConst:
    value: bool


@dataclass(frozen=True)
class Cmp:
    op: str  # < <= > >= == !=
    left: "Expr"
    right: "Expr"
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class BoolOp:
    op: str  # and / or
    args: tuple


@dataclass(frozen=True)
class NotExpr:
    arg: "Expr"


Expr = Union[Num, Var, BinOp, Neg, BoolConst, Cmp, BoolOp, NotExpr]


def expr_vars(e: Expr) -> set:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, (BinOp, Cmp)):
        return expr_vars(e.left) | expr_vars(e.right)
    if isinstance(e, (Neg, NotExpr)):
        return expr_vars(e.arg)
    if isinstance(e, BoolOp):
        out = set()
        for a in e.args:
            out |= expr_vars(a)
        return out
    return set()


def rename_expr(e: Expr, names: dict) -> Expr:
    if isinstance(e, Var):
        return Var(names.get(e.name, e.name), e.line)
    if isinstance(e, BinOp):
        return BinOp(e.op, rename_expr(e.left, names), rename_expr(e.right, names), e.line)
    if isinstance(e, Cmp):
        return Cmp(e.op, rename_expr(e.left, names), rename_expr(e.right, names), e.line)
    if isinstance(e, Neg):
        return Neg(rename_expr(e.arg, names))
    if isinstance(e, NotExpr):
        return NotExpr(rename_expr(e.arg, names))
    if isinstance(e, BoolOp):
        return BoolOp(e.op, tuple(rename_expr(a, names) for a in e.args))
    return e


def is_boolean(e: Expr, bool_vars: set) -> bool:
    if isinstance(e, (BoolConst, Cmp, BoolOp, NotExpr)):
        return True
    if isinstance(e, Var):
        return e.name in bool_vars
    return False


def show_expr(e: Expr) -> str:
    if isinstance(e, Num):
        v = e.value
        return str(v.numerator) if v.denominator == 1 else repr(float(v))
    if isinstance(e, Var):
        return e.name
    if isinstance(e, BinOp):
        return f"({show_expr(e.left)} {e.op} {show_expr(e.right)})"
    if isinstance(e, Cmp):
        return f"{show_expr(e.left)} {e.op} {show_expr(e.right)}"
    if isinstance(e, Neg):
        return f"-{show_expr(e.arg)}"
    if isinstance(e, NotExpr):
        return f"not ({show_expr(e.arg)})"
    if isinstance(e, BoolOp):
        return "(" + f" {e.op} ".join(show_expr(a) for a in e.args) + ")"
    return "True" if e.value else "False"


# ---------------------------------------------------------------------------
# statements


@dataclass(frozen=True)
class Assign:
    var: str
    expr: Expr
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class ProbAssign:
    """``var ~ dist``; ``site`` identifies the sampling site across rewrites."""

    var: str
    dist: Distribution
    site: int
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Cond:
    cond: Expr
    then: tuple
    orelse: tuple
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Marker:
    """One of the fairness annotations: ``sensitive``, ``qualified`` or ``target``."""

    kind: str
    expr: Expr
    line: int = field(default=0, compare=False)


Statement = Union[Assign, ProbAssign, Cond, Marker]

MARKER_KINDS = ("sensitive", "qualified", "target")


def walk(stmts) -> list:
    """All statements in program order, descending into both branches."""
    out = []
    for s in stmts:
        out.append(s)
        if isinstance(s, Cond):
            out += walk(s.then)
            out += walk(s.orelse)
    return out


def assigned_vars(stmts) -> list:
    """Assigned variable names in first-assignment order."""
    seen = {}
    for s in walk(stmts):
        if isinstance(s, (Assign, ProbAssign)):
            seen.setdefault(s.var, None)
    return list(seen)


@dataclass(frozen=True)
class Program:
    """A loop-free program; markers are kept as statements at their position."""

    statements: tuple
    input_vars: tuple = ()
    output_vars: tuple = ()
    name: str = ""
    versions: Optional[dict] = field(default=None, compare=False)

    @property
    def all_vars(self) -> set:
        return set(assigned_vars(self.statements)) | set(self.input_vars)

    @property
    def prob_vars(self) -> set:
        return {s.var for s in walk(self.statements) if isinstance(s, ProbAssign)}

    @property
    def det_vars(self) -> set:
        return self.all_vars - self.prob_vars

    @property
    def bool_vars(self) -> set:
        out = set()
        changed = True
        while changed:
            changed = False
            for s in walk(self.statements):
                if isinstance(s, Assign) and s.var not in out and is_boolean(s.expr, out):
                    out.add(s.var)
                    changed = True
        return out

    @property
    def markers(self) -> dict:
        return {s.kind: s.expr for s in walk(self.statements) if isinstance(s, Marker)}

    @property
    def sites(self) -> list:
        return [s for s in walk(self.statements) if isinstance(s, ProbAssign)]

    def latest(self, name: str) -> str:
        """SSA name holding the final value of ``name``."""
        if self.versions is None:
            return name
        return self.versions.get(name, name)
