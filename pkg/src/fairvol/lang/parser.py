"""Parser for the indentation-based model language.

A source file holds a population model block and optionally a decision
block::

    def popModel():
        x ~ gaussian(0, 1)        # mean and variance
        y ~ gauss(0, 1)           # mean and standard deviation
        s ~ step([(0, 1, 0.3), (1, 2, 0.7)])
        sensitiveAttribute(s < 1)

    def F():
        t = x + y
        if t > 0:
            t = t - 1
        fairnessTarget(t < 0)

Statements may also appear at top level without a ``def``.  Lines that start
with a binary operator, or that follow an unclosed parenthesis, continue the
previous line.  Comments start with ``//`` or ``#``; comments of the form
``key: value`` are collected as directives (used by the benchmark runner).
"""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from ..dist import Gaussian, Step
from .ast import (
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
    expr_vars,
    rename_expr,
    walk,
)

MARKER_NAMES = {
    "sensitiveAttribute": "sensitive",
    "qualified": "qualified",
    "fairnessTarget": "target",
}
DIST_NAMES = ("gaussian", "gauss", "step")
KEYWORDS = {"def", "if", "elif", "else", "and", "or", "not", "True", "False", "pass"}

_TOKEN = re.compile(
    r"""
    (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op><=|>=|==|!=|<-|←|&&|\|\||[-+*/()<>=~!,:;\[\]])
  | (?P<ws>[ \t]+)
    """,
    re.VERBOSE,
)
_CONTINUATION_START = re.compile(r"^(?:[-+*/]|&&|\|\||and\b|or\b)")
_DIRECTIVE = re.compile(r"^\s*([A-Za-z_][A-Za-z_0-9-]*)\s*:\s*(.+?)\s*$")


@dataclass(frozen=True)
class Token:
    kind: str  # num, name, op, end
    text: str
    line: int
    col: int


@dataclass
class Line:
    indent: int
    tokens: list
    line: int


@dataclass
class Section:
    name: str
    params: tuple
    statements: tuple
    line: int


@dataclass(frozen=True)
class Problem:
    """Population model, decision program and the variable links between them.

    ``links`` pairs each population variable's final version with the
    decision-program input that receives it.
    """

    pre: Program
    dec: Optional[Program]
    links: tuple = ()
    directives: dict = field(default_factory=dict, compare=False)


# ---------------------------------------------------------------------------
# lexing


def _strip_comment(text: str) -> tuple:
    cut = len(text)
    for marker in ("//", "#"):
        k = text.find(marker)
        if k != -1:
            cut = min(cut, k)
    return text[:cut], text[cut:].lstrip("/#")


def _tokenize(text: str, line: int, col0: int = 0) -> list:
    out, pos = [], 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col0 + pos + 1)
        kind = m.lastgroup
        if kind != "ws":
            out.append(Token(kind, m.group(), line, col0 + pos + 1))
        pos = m.end()
    return out


def _paren_depth(tokens: list) -> int:
    depth = 0
    for t in tokens:
        if t.kind == "op" and t.text in "([":
            depth += 1
        elif t.kind == "op" and t.text in ")]":
            depth -= 1
    return depth


def _logical_lines(text: str) -> tuple:
    """Split into logical lines and collect ``key: value`` comment directives."""
    lines, directives = [], {}
    pending: Optional[Line] = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        code, comment = _strip_comment(raw.replace("\t", "    "))
        m = _DIRECTIVE.match(comment) if comment else None
        if m and m.group(1).lower() in ("expect", "epsilon", "event", "qualified", "name"):
            directives[m.group(1).lower()] = m.group(2)
        if not code.strip():
            continue
        stripped = code.lstrip()
        indent = len(code) - len(stripped)
        tokens = _tokenize(stripped, lineno, indent)
        if pending is not None and (
            _paren_depth(pending.tokens) > 0 or _CONTINUATION_START.match(stripped)
        ):
            pending.tokens.extend(tokens)
            continue
        if pending is not None:
            lines.append(pending)
        pending = Line(indent, tokens, lineno)
    if pending is not None:
        lines.append(pending)
    for ln in lines:
        if _paren_depth(ln.tokens) != 0:
            raise ParseError("unbalanced parentheses", ln.line, ln.indent + 1)
    return lines, directives


# ---------------------------------------------------------------------------
# expressions


class _Cursor:
    def __init__(self, tokens: list, line: int):
        self.tokens = tokens
        self.pos = 0
        self.line = line

    def peek(self, offset: int = 0) -> Token:
        k = self.pos + offset
        if k < len(self.tokens):
            return self.tokens[k]
        last = self.tokens[-1] if self.tokens else None
        col = (last.col + len(last.text)) if last else 1
        return Token("end", "", self.line, col)

    def next(self) -> Token:
        t = self.peek()
        self.pos += 1
        return t

    def at(self, *texts: str) -> bool:
        t = self.peek()
        return t.kind in ("op", "name") and t.text in texts

    def expect(self, text: str) -> Token:
        t = self.next()
        if t.text != text:
            found = t.text or "end of line"
            raise ParseError(f"expected {text!r}, found {found!r}", t.line, t.col)
        return t

    def done(self) -> bool:
        return self.pos >= len(self.tokens)


def _parse_expr(c: _Cursor):
    return _parse_or(c)


def _parse_or(c: _Cursor):
    args = [_parse_and(c)]
    while c.at("or", "||"):
        c.next()
        args.append(_parse_and(c))
    return args[0] if len(args) == 1 else BoolOp("or", tuple(args))


def _parse_and(c: _Cursor):
    args = [_parse_not(c)]
    while c.at("and", "&&"):
        c.next()
        args.append(_parse_not(c))
    return args[0] if len(args) == 1 else BoolOp("and", tuple(args))


def _parse_not(c: _Cursor):
    if c.at("not", "!"):
        c.next()
        return NotExpr(_parse_not(c))
    return _parse_cmp(c)


def _parse_cmp(c: _Cursor):
    left = _parse_arith(c)
    if c.at("<", "<=", ">", ">=", "==", "!="):
        t = c.next()
        right = _parse_arith(c)
        return Cmp(t.text, left, right, t.line)
    return left


def _parse_arith(c: _Cursor):
    left = _parse_term(c)
    while c.at("+", "-"):
        t = c.next()
        left = BinOp(t.text, left, _parse_term(c), t.line)
    return left


def _parse_term(c: _Cursor):
    left = _parse_unary(c)
    while c.at("*", "/"):
        t = c.next()
        left = BinOp(t.text, left, _parse_unary(c), t.line)
    return left


def _parse_unary(c: _Cursor):
    if c.at("-"):
        c.next()
        inner = _parse_unary(c)
        if isinstance(inner, Num):
            return Num(-inner.value)
        return Neg(inner)
    if c.at("+"):
        c.next()
        return _parse_unary(c)
    return _parse_atom(c)


def _parse_atom(c: _Cursor):
    t = c.next()
    if t.kind == "num":
        return Num(Fraction(t.text))
    if t.kind == "name":
        if t.text == "True":
            return BoolConst(True)
        if t.text == "False":
            return BoolConst(False)
        if t.text in KEYWORDS:
            raise ParseError(f"unexpected keyword {t.text!r}", t.line, t.col)
        if c.at("("):
            raise ParseError(f"unknown function {t.text!r}", t.line, t.col)
        return Var(t.text, t.line)
    if t.text == "(":
        inner = _parse_expr(c)
        c.expect(")")
        return inner
    found = t.text or "end of line"
    raise ParseError(f"unexpected {found!r} in expression", t.line, t.col)


def parse_expression(text: str):
    """Parse a standalone expression (used for command-line events)."""
    c = _Cursor(_tokenize(text.strip(), 1), 1)
    e = _parse_expr(c)
    if not c.done():
        t = c.peek()
        raise ParseError(f"unexpected {t.text!r} after expression", t.line, t.col)
    return e


def const_value(e) -> Optional[Fraction]:
    """Value of a variable-free arithmetic expression, else ``None``."""
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Neg):
        v = const_value(e.arg)
        return None if v is None else -v
    if isinstance(e, BinOp):
        a, b = const_value(e.left), const_value(e.right)
        if a is None or b is None:
            return None
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if b == 0:
            return None
        return a / b
    return None


# ---------------------------------------------------------------------------
# statements


class _StatementParser:
    def __init__(self):
        self.site = 0

    def block(self, lines: list, i: int, indent: int) -> tuple:
        """Parse lines at exactly ``indent`` starting at ``i``; return (stmts, next i)."""
        out = []
        while i < len(lines) and lines[i].indent >= indent:
            ln = lines[i]
            if ln.indent > indent:
                raise ParseError("unexpected indentation", ln.line, ln.indent + 1)
            first = ln.tokens[0]
            if first.text in ("elif", "else"):
                raise ParseError(f"{first.text!r} without matching 'if'", ln.line, first.col)
            if first.text == "if":
                stmt, i = self.conditional(lines, i, indent)
                out.append(stmt)
                continue
            out.extend(self.simple_list(ln.tokens, ln.line))
            i += 1
        return tuple(out), i

    def body(self, lines: list, i: int, indent: int, rest: list, line: int) -> tuple:
        """Body after a header colon: inline statements or an indented block."""
        if rest:
            return tuple(self.simple_list(rest, line)), i + 1
        if i + 1 >= len(lines) or lines[i + 1].indent <= indent:
            raise ParseError("expected an indented block", line, indent + 1)
        return self.block(lines, i + 1, lines[i + 1].indent)

    def header(self, ln: Line) -> tuple:
        c = _Cursor(ln.tokens, ln.line)
        kw = c.next()
        cond = None if kw.text == "else" else _parse_expr(c)
        c.expect(":")
        return kw, cond, c.tokens[c.pos :]

    def conditional(self, lines: list, i: int, indent: int) -> tuple:
        ln = lines[i]
        kw, cond, rest = self.header(ln)
        then, i = self.body(lines, i, indent, rest, ln.line)
        orelse: tuple = ()
        if i < len(lines) and lines[i].indent == indent and lines[i].tokens[0].text == "elif":
            nested, i = self.conditional(lines, i, indent)
            orelse = (nested,)
        elif i < len(lines) and lines[i].indent == indent and lines[i].tokens[0].text == "else":
            ln2 = lines[i]
            _, _, rest2 = self.header(ln2)
            orelse, i = self.body(lines, i, indent, rest2, ln2.line)
        return Cond(cond, then, orelse, kw.line), i

    def simple_list(self, tokens: list, line: int) -> list:
        out, start, depth = [], 0, 0
        for k, t in enumerate(tokens + [Token("op", ";", line, 0)]):
            if t.kind == "op" and t.text in "([":
                depth += 1
            elif t.kind == "op" and t.text in ")]":
                depth -= 1
            elif t.kind == "op" and t.text == ";" and depth == 0:
                if k > start:
                    out.extend(self.simple(tokens[start:k], line))
                start = k + 1
        return out

    def simple(self, tokens: list, line: int) -> list:
        c = _Cursor(tokens, line)
        first = c.next()
        if first.text == "pass":
            return []
        if first.text == "if":
            raise ParseError("'if' must start its own line", first.line, first.col)
        if first.kind != "name" or first.text in KEYWORDS:
            raise ParseError(f"unexpected {first.text!r} at start of statement", first.line, first.col)
        if first.text in MARKER_NAMES and c.at("("):
            c.expect("(")
            e = _parse_expr(c)
            c.expect(")")
            self._finish(c)
            return [Marker(MARKER_NAMES[first.text], e, first.line)]
        op = c.next()
        if op.text in ("=", "<-", "←"):
            e = _parse_expr(c)
            self._finish(c)
            return [Assign(first.text, e, first.line)]
        if op.text == "~":
            dist = self.distribution(c)
            self._finish(c)
            self.site += 1
            return [ProbAssign(first.text, dist, self.site, first.line)]
        found = op.text or "end of line"
        raise ParseError(f"expected '=', '<-' or '~' after {first.text!r}, found {found!r}", op.line, op.col)

    @staticmethod
    def _finish(c: _Cursor):
        if not c.done():
            t = c.peek()
            raise ParseError(f"unexpected {t.text!r} at end of statement", t.line, t.col)

    def distribution(self, c: _Cursor):
        name = c.next()
        if name.kind != "name" or name.text not in DIST_NAMES:
            raise ParseError(f"unknown distribution {name.text!r}", name.line, name.col)
        c.expect("(")
        if name.text == "step":
            segs = self.step_segments(c)
            c.expect(")")
            if not segs:
                raise ParseError("step distribution needs at least one segment", name.line, name.col)
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                dist = _checked(lambda: Step.normalized(segs), name)
            for w in caught:
                warnings.warn(f"line {name.line}: {w.message}", stacklevel=2)
            return dist
        args = [self.constant(c)]
        while c.at(","):
            c.next()
            args.append(self.constant(c))
        c.expect(")")
        if len(args) != 2:
            raise ParseError(f"{name.text} takes 2 parameters, got {len(args)}", name.line, name.col)
        mean, spread = (float(a) for a in args)
        if name.text == "gaussian":
            return _checked(lambda: Gaussian.from_variance(mean, spread), name)
        return _checked(lambda: Gaussian(mean, spread), name)

    def constant(self, c: _Cursor) -> Fraction:
        t = c.peek()
        e = _parse_arith(c)
        v = const_value(e)
        if v is None:
            raise ParseError("distribution parameters must be numeric constants", t.line, t.col)
        return v

    def step_segments(self, c: _Cursor) -> list:
        c.expect("[")
        segs = []
        while not c.at("]"):
            c.expect("(")
            lo = self.constant(c)
            c.expect(",")
            hi = self.constant(c)
            c.expect(",")
            w = self.constant(c)
            c.expect(")")
            segs.append((lo, hi, w))
            if c.at(","):
                c.next()
        c.expect("]")
        return segs


def _checked(build, tok: Token):
    try:
        return build()
    except ValueError as exc:
        raise ParseError(str(exc), tok.line, tok.col) from exc


def _sections(text: str) -> tuple:
    lines, directives = _logical_lines(text)
    parser = _StatementParser()
    sections, loose = [], []
    i = 0
    while i < len(lines):
        ln = lines[i]
        if ln.tokens[0].text == "def":
            c = _Cursor(ln.tokens, ln.line)
            c.next()
            name = c.next()
            if name.kind != "name":
                raise ParseError("expected a block name after 'def'", name.line, name.col)
            params = []
            c.expect("(")
            while not c.at(")"):
                p = c.next()
                if p.kind != "name":
                    raise ParseError(f"bad parameter {p.text!r}", p.line, p.col)
                params.append(p.text)
                if c.at(","):
                    c.next()
            c.expect(")")
            c.expect(":")
            rest = c.tokens[c.pos :]
            stmts, i = parser.body(lines, i, ln.indent, rest, ln.line)
            sections.append(Section(name.text, tuple(params), stmts, ln.line))
            continue
        if ln.indent != 0:
            raise ParseError("unexpected indentation", ln.line, ln.indent + 1)
        stmts, i = parser.block(lines, i, 0)
        loose.extend(stmts)
    if loose:
        sections.insert(0, Section("main", (), tuple(loose), 1))
    return sections, directives


# ---------------------------------------------------------------------------
# well-formedness


def _check_markers(stmts, seen: dict, nested: bool = False):
    for s in stmts:
        if isinstance(s, Marker):
            if nested:
                raise ParseError(f"marker {s.kind!r} inside a conditional", s.line, 1)
            if s.kind in seen:
                raise ParseError(f"marker {s.kind!r} used twice", s.line, 1)
            seen[s.kind] = s
        elif isinstance(s, Cond):
            _check_markers(s.then, seen, True)
            _check_markers(s.orelse, seen, True)


def _unassigned_reads(stmts, defined: set) -> list:
    """Reads of variables not assigned on any earlier path, as (name, line)."""
    out = []

    def visit(block, known: set) -> set:
        for s in block:
            if isinstance(s, Assign):
                out.extend((v, s.line) for v in sorted(expr_vars(s.expr) - known))
                known = known | {s.var}
            elif isinstance(s, ProbAssign):
                known = known | {s.var}
            elif isinstance(s, Marker):
                out.extend((v, s.line) for v in sorted(expr_vars(s.expr) - known))
            elif isinstance(s, Cond):
                out.extend((v, s.line) for v in sorted(expr_vars(s.cond) - known))
                known = visit(s.then, known) | visit(s.orelse, known)
        return known

    visit(stmts, set(defined))
    return out


def _check_types(p: Program):
    bools = p.bool_vars

    def arith(e, line):
        if isinstance(e, Var) and e.name in bools:
            raise ParseError(f"boolean variable {e.name!r} used in arithmetic", line, 1)
        if isinstance(e, (BoolConst, Cmp, BoolOp, NotExpr)):
            raise ParseError("boolean expression used in arithmetic", line, 1)
        if isinstance(e, BinOp):
            arith(e.left, line)
            arith(e.right, line)
        elif isinstance(e, Neg):
            arith(e.arg, line)

    def boolean(e, line):
        if isinstance(e, (Num, BinOp, Neg)) or (isinstance(e, Var) and e.name not in bools):
            raise ParseError("expected a condition", line, 1)
        if isinstance(e, Cmp):
            arith(e.left, line)
            arith(e.right, line)
        elif isinstance(e, BoolOp):
            for a in e.args:
                boolean(a, line)
        elif isinstance(e, NotExpr):
            boolean(e.arg, line)

    for s in walk(p.statements):
        if isinstance(s, Assign):
            if s.var in bools:
                boolean(s.expr, s.line)
            else:
                arith(s.expr, s.line)
        elif isinstance(s, Cond):
            boolean(s.cond, s.line)
        elif isinstance(s, Marker):
            boolean(s.expr, s.line)
    prob_bool = p.prob_vars & bools
    if prob_bool:
        raise ParseError(f"variable {sorted(prob_bool)[0]!r} is both sampled and boolean", 0, 0)


def _finish_program(stmts: tuple, inputs: tuple, name: str) -> Program:
    reads = _unassigned_reads(stmts, set(inputs))
    if reads:
        v, line = reads[0]
        raise ParseError(f"variable {v!r} is read before assignment", line, 1)
    p = Program(stmts, input_vars=inputs, name=name)
    _check_types(p)
    return p


def _split(sections: list) -> tuple:
    if not sections:
        raise ParseError("empty program", 1, 1)
    if len(sections) > 2:
        s = sections[2]
        raise ParseError("expected a population model and at most one decision block", s.line, 1)
    pre = sections[0]
    dec = sections[1] if len(sections) == 2 else None
    seen: dict = {}
    for s in sections:
        _check_markers(s.statements, seen)
    return pre, dec


def parse_program(text: str) -> Program:
    """Parse source into one program (the decision block runs after the model)."""
    sections, _ = _sections(text)
    pre, dec = _split(sections)
    if dec is None:
        return _finish_program(pre.statements, pre.params, pre.name)
    return _finish_program(pre.statements + dec.statements, pre.params, "main")


def parse_problem(text: str) -> Problem:
    """Parse source into a population model and a separately compiled decision program.

    Decision-program variables that clash with model variables are renamed
    with an ``__in`` suffix; those read before assignment become inputs fed
    from the model's final values.
    """
    sections, directives = _sections(text)
    pre_sec, dec_sec = _split(sections)
    pre = _finish_program(pre_sec.statements, pre_sec.params, pre_sec.name)
    if dec_sec is None:
        return Problem(pre, None, (), directives)
    pre_names = pre.all_vars
    dec_names = set()
    for s in walk(dec_sec.statements):
        if isinstance(s, (Assign, ProbAssign)):
            dec_names.add(s.var)
        if isinstance(s, Assign):
            dec_names |= expr_vars(s.expr)
        elif isinstance(s, Cond):
            dec_names |= expr_vars(s.cond)
        elif isinstance(s, Marker):
            dec_names |= expr_vars(s.expr)
    dec_names |= set(dec_sec.params)
    taken = pre_names | dec_names
    mapping = {}
    for v in sorted(dec_names & pre_names):
        new = v + "__in"
        while new in taken:
            new += "_"
        taken.add(new)
        mapping[v] = new
    stmts = _rename_statements(dec_sec.statements, mapping)
    reads = _unassigned_reads(stmts, set())
    inputs = []
    inverse = {new: old for old, new in mapping.items()}
    for v, line in reads:
        if v in inverse:
            if v not in inputs:
                inputs.append(v)
        else:
            raise ParseError(f"variable {v!r} is read before assignment", line, 1)
    dec = _finish_program(stmts, tuple(inputs), dec_sec.name)
    links = tuple((inverse[v], v) for v in inputs)
    return Problem(pre, dec, links, directives)


def _rename_statements(stmts, mapping: dict) -> tuple:
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
                    _rename_statements(s.then, mapping),
                    _rename_statements(s.orelse, mapping),
                    s.line,
                )
            )
    return tuple(out)


def load_problem(path) -> Problem:
    with open(path, encoding="utf-8") as fh:
        return parse_problem(fh.read())


__all__ = [
    "ParseError",
    "Problem",
    "const_value",
    "load_problem",
    "parse_expression",
    "parse_problem",
    "parse_program",
]

