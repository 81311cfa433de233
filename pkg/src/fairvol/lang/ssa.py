"""Static single assignment conversion.

The first assignment of ``x`` keeps the name ``x``; later ones become
``x_1``, ``x_2``, ... (skipping names already in use).  After a conditional
each variable whose version differs between the branches gets one merged
name, defined on both paths.  When the then-branch ends with a version it
created by a deterministic assignment, that version is reused as the merged
name, so ``if c: x = x + 5`` yields ``x_1 = x + 5`` on one path and the
identity ``x_1 = x`` on the other.  Sampled versions are never reused,
keeping sampled and deterministic variables disjoint.

Variables that may be read or merged before any assignment are first
initialized to zero, matching the interpreter's default.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .ast import (
    Assign,
    BoolConst,
    Cond,
    Marker,
    Num,
    ProbAssign,
    Program,
    Var,
    assigned_vars,
    expr_vars,
    rename_expr,
)


@dataclass
class _Namer:
    used: set
    based: set = field(default_factory=set)

    def fresh(self, base: str) -> str:
        if base not in self.based:
            self.based.add(base)
            return base
        k = 1
        while f"{base}_{k}" in self.used:
            k += 1
        name = f"{base}_{k}"
        self.used.add(name)
        return name


class _Pass:
    def __init__(self, p: Program):
        self.order = {v: k for k, v in enumerate(list(p.input_vars) + assigned_vars(p.statements))}
        self.namer = _Namer(set(self.order))
        self.namer.based |= set(p.input_vars)
        self.need_zero: set = set()

    def read(self, e, env: dict):
        for v in expr_vars(e):
            if v not in env:
                self.need_zero.add(v)
        return rename_expr(e, env)

    def block(self, stmts, env: dict) -> tuple:
        env = dict(env)
        out, created = [], {}
        for s in stmts:
            if isinstance(s, Assign):
                e = self.read(s.expr, env)
                name = self.namer.fresh(s.var)
                out.append(Assign(name, e, s.line))
                env[s.var] = name
                created[name] = "det"
            elif isinstance(s, ProbAssign):
                name = self.namer.fresh(s.var)
                out.append(ProbAssign(name, s.dist, s.site, s.line))
                env[s.var] = name
                created[name] = "prob"
            elif isinstance(s, Marker):
                out.append(Marker(s.kind, self.read(s.expr, env), s.line))
            elif isinstance(s, Cond):
                stmt, env, made = self.conditional(s, env)
                out.append(stmt)
                created.update(made)
        return out, env, created

    def conditional(self, s: Cond, env: dict) -> tuple:
        cond = self.read(s.cond, env)
        then, env_t, made_t = self.block(s.then, env)
        orelse, env_e, made_e = self.block(s.orelse, env)
        created = {**made_t, **made_e}
        merged = dict(env)
        names = sorted(set(env_t) | set(env_e), key=lambda v: self.order.get(v, len(self.order)))
        for x in names:
            v_t, v_e = env_t.get(x), env_e.get(x)
            if v_t == v_e:
                merged[x] = v_t
                continue
            if v_t is None or v_e is None:
                self.need_zero.add(x)
                continue
            if made_t.get(v_t) == "det":
                m = v_t
                if made_e.get(v_e) == "det":
                    orelse = _rename_all(orelse, {v_e: m})
                    created.pop(v_e, None)
                else:
                    orelse.append(Assign(m, Var(v_e), s.line))
            elif made_e.get(v_e) == "det":
                m = v_e
                then.append(Assign(m, Var(v_t), s.line))
            else:
                m = self.namer.fresh(x)
                then.append(Assign(m, Var(v_t), s.line))
                orelse.append(Assign(m, Var(v_e), s.line))
            created[m] = "det"
            merged[x] = m
        return Cond(cond, tuple(then), tuple(orelse), s.line), merged, created


def _rename_all(stmts, mapping: dict) -> list:
    out = []
    for s in stmts:
        if isinstance(s, Assign):
            out.append(Assign(mapping.get(s.var, s.var), rename_expr(s.expr, mapping), s.line))
        elif isinstance(s, ProbAssign):
            out.append(ProbAssign(mapping.get(s.var, s.var), s.dist, s.site, s.line))
        elif isinstance(s, Marker):
            out.append(Marker(s.kind, rename_expr(s.expr, mapping), s.line))
        else:
            out.append(
                Cond(
                    rename_expr(s.cond, mapping),
                    tuple(_rename_all(s.then, mapping)),
                    tuple(_rename_all(s.orelse, mapping)),
                    s.line,
                )
            )
    return out


def to_ssa(p: Program) -> Program:
    """Equivalent program in which every variable is assigned at most once per path."""
    bools = p.bool_vars
    zero: list = []
    while True:
        inits = tuple(Assign(v, BoolConst(False) if v in bools else Num(0)) for v in zero)
        src = Program(inits + tuple(p.statements), p.input_vars, p.output_vars, p.name)
        sp = _Pass(src)
        start = {v: v for v in p.input_vars}
        stmts, env, _ = sp.block(src.statements, start)
        missing = sorted(sp.need_zero - set(zero), key=lambda v: sp.order.get(v, 0))
        if not missing:
            break
        zero.extend(missing)
    outputs = tuple(env.get(v, v) for v in p.output_vars)
    return Program(tuple(stmts), p.input_vars, outputs, p.name, versions=env)


def is_ssa(p: Program) -> bool:
    """Every variable assigned at most once on each path (checked syntactically)."""

    def visit(stmts, seen: set) -> bool:
        for s in stmts:
            if isinstance(s, (Assign, ProbAssign)):
                if s.var in seen:
                    return False
                seen.add(s.var)
            elif isinstance(s, Cond):
                a, b = set(seen), set(seen)
                if not (visit(s.then, a) and visit(s.orelse, b)):
                    return False
                seen |= a | b
        return True

    return visit(p.statements, set(p.input_vars))


__all__ = ["is_ssa", "to_ssa"]

