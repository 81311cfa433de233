"""Hyperrectangles and the symbolic decomposition of a region into boxes.

A formula over ``X`` is decomposed into a formula over fresh endpoint
variables ``l_x``/``u_x`` whose models are exactly the boxes contained in
the region.  ``block`` rules out boxes that overlap an already counted one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence, Union

from .formula import (
    FALSE,
    TRUE,
    And,
    Formula,
    Not,
    conj,
    disj,
    forall,
    free_vars,
    implies,
    make_atom,
    negate_atom,
)
from .qe import DEFAULT_DNF_CAP, project_conj, to_dnf

Endpoint = Union[Fraction, float]  # float only for +-inf

INF = math.inf


def is_finite(e: Endpoint) -> bool:
    return not (isinstance(e, float) and math.isinf(e))


@dataclass(frozen=True)
class Hyperrectangle:
    """Axis-aligned box; ``bounds`` is a tuple of ``(var, lo, hi)``."""

    bounds: tuple

    def __post_init__(self):
        for name, lo, hi in self.bounds:
            if lo > hi:
                raise ValueError(f"empty interval for {name}: [{lo}, {hi}]")

    @classmethod
    def from_dict(cls, bounds: Mapping[str, tuple]) -> "Hyperrectangle":
        return cls(tuple((v, _endpoint(lo), _endpoint(hi)) for v, (lo, hi) in bounds.items()))

    @property
    def vars(self) -> tuple:
        return tuple(v for v, _, _ in self.bounds)

    def as_dict(self) -> dict:
        return {v: (lo, hi) for v, lo, hi in self.bounds}

    def lo(self, name: str) -> Endpoint:
        return self.as_dict()[name][0]

    def hi(self, name: str) -> Endpoint:
        return self.as_dict()[name][1]

    def with_bound(self, name: str, lo: Endpoint = None, hi: Endpoint = None) -> "Hyperrectangle":
        out = []
        for v, a, b in self.bounds:
            if v == name:
                a = a if lo is None else lo
                b = b if hi is None else hi
            out.append((v, a, b))
        return Hyperrectangle(tuple(out))

    def to_formula(self) -> Formula:
        """The region ``lo <= x <= hi`` (infinite endpoints dropped)."""
        parts = []
        for v, lo, hi in self.bounds:
            if is_finite(lo):
                parts.append(make_atom({v: 1}, ">=", lo))
            if is_finite(hi):
                parts.append(make_atom({v: 1}, "<=", hi))
        return conj(*parts)

    def overlaps(self, other: "Hyperrectangle") -> bool:
        """True if the closed boxes share a point."""
        theirs = other.as_dict()
        for v, lo, hi in self.bounds:
            if v not in theirs:
                continue
            olo, ohi = theirs[v]
            if hi < olo or ohi < lo:
                return False
        return True

    def is_degenerate(self) -> bool:
        return any(lo == hi for _, lo, hi in self.bounds)

    def __str__(self):
        return " x ".join(f"{v}:[{_fmt(lo)}, {_fmt(hi)}]" for v, lo, hi in self.bounds)


def _endpoint(e) -> Endpoint:
    if isinstance(e, float) and math.isinf(e):
        return e
    return Fraction(e)


def _fmt(e: Endpoint) -> str:
    if not is_finite(e):
        return "-inf" if e < 0 else "inf"
    return f"{float(e):.6g}"


# ---------------------------------------------------------------------------
# decomposition


@dataclass(frozen=True)
class Decomposition:
    """Endpoint naming plus the decomposition formula of one region."""

    vars: tuple
    lo_names: tuple
    hi_names: tuple
    quantified: Formula
    qf: Optional[Formula] = field(default=None, compare=False)

    def lo_name(self, x: str) -> str:
        return self.lo_names[self.vars.index(x)]

    def hi_name(self, x: str) -> str:
        return self.hi_names[self.vars.index(x)]

    @property
    def endpoint_names(self) -> tuple:
        out = []
        for lo, hi in zip(self.lo_names, self.hi_names):
            out += [lo, hi]
        return tuple(out)

    @property
    def formula(self) -> Formula:
        """The quantifier-free form when available, else the quantified one."""
        return self.qf if self.qf is not None else self.quantified

    def well_formed(self) -> Formula:
        return conj(*(make_atom({lo: 1, hi: -1}, "<=", 0) for lo, hi in zip(self.lo_names, self.hi_names)))

    def box_constraint(self) -> Formula:
        """``l_x <= x <= u_x`` for every dimension."""
        parts = []
        for x, lo, hi in zip(self.vars, self.lo_names, self.hi_names):
            parts.append(make_atom({lo: 1, x: -1}, "<=", 0))
            parts.append(make_atom({x: 1, hi: -1}, "<=", 0))
        return conj(*parts)


def fresh_endpoint_names(names: Sequence[str], taken: Iterable[str]) -> tuple:
    """``__l_<v>`` / ``__u_<v>`` names, suffixed until they avoid ``taken``."""
    taken = set(taken) | set(names)
    lows, highs = [], []
    for v in names:
        for prefix, out in (("__l_", lows), ("__u_", highs)):
            candidate = prefix + v
            k = 0
            while candidate in taken:
                k += 1
                candidate = f"{prefix}{v}_{k}"
            taken.add(candidate)
            out.append(candidate)
    return tuple(lows), tuple(highs)


def decompose(
    phi: Formula,
    variables: Sequence[str],
    neg_dnf: Optional[list] = None,
    cap: int = DEFAULT_DNF_CAP,
    eliminate: bool = True,
) -> Decomposition:
    """Build the box decomposition of ``phi`` over ``variables``.

    ``neg_dnf`` may carry a precomputed DNF of ``not phi``; otherwise it is
    computed here.  When ``eliminate`` is set the universal quantifier is
    removed (raising :class:`QeBudgetExceeded` past ``cap``).
    """
    variables = tuple(variables)
    extra = free_vars(phi) - set(variables)
    if extra:
        raise ValueError(f"formula mentions variables outside the box: {sorted(extra)}")
    lows, highs = fresh_endpoint_names(variables, free_vars(phi))
    base = Decomposition(variables, lows, highs, TRUE)
    quantified = conj(base.well_formed(), forall(variables, implies(base.box_constraint(), phi)))
    dec = Decomposition(variables, lows, highs, quantified)
    if not eliminate:
        return dec
    if neg_dnf is None:
        neg_dnf = to_dnf(Not(phi), cap)
    return Decomposition(variables, lows, highs, quantified, _eliminate(dec, neg_dnf))


def _eliminate(dec: Decomposition, neg_dnf: list) -> Formula:
    """``wf and forall X. box => phi`` as ``wf and AND_j not exists X. box and D_j``."""
    wf_atoms = set(_conjuncts(dec.well_formed()))
    box = _conjuncts(dec.box_constraint())
    clauses = [dec.well_formed()]
    for d in neg_dnf:
        projected = project_conj(box + list(d), dec.vars)
        if projected is None:
            continue  # no box can meet this disjunct of the complement
        literals = [a for a in projected if a not in wf_atoms]
        if not literals:
            return FALSE
        clauses.append(disj(*(negate_atom(a) for a in literals)))
    return conj(*clauses)


def _conjuncts(f: Formula) -> list:
    if f == TRUE:
        return []
    if isinstance(f, And):
        return list(f.args)
    return [f]


def block(h: Hyperrectangle, dec: Decomposition) -> Formula:
    """Boxes disjoint from ``h``: some upper end below ``h``'s lower end or vice versa."""
    parts = []
    for x, lo, hi in h.bounds:
        if is_finite(lo):
            parts.append(make_atom({dec.hi_name(x): 1}, "<", lo))
        if is_finite(hi):
            parts.append(make_atom({dec.lo_name(x): 1}, ">", hi))
    return disj(*parts)


def induced_rectangle(model: Mapping[str, Fraction], dec: Decomposition) -> Hyperrectangle:
    out = []
    for x, lo, hi in zip(dec.vars, dec.lo_names, dec.hi_names):
        a, b = Fraction(model[lo]), Fraction(model[hi])
        if a > b:
            raise ValueError(f"solver model has l > u for {x}: {a} > {b}")
        out.append((x, a, b))
    return Hyperrectangle(tuple(out))


def endpoint_assignment(h: Hyperrectangle, dec: Decomposition) -> dict:
    """Inverse of :func:`induced_rectangle` (infinite endpoints included)."""
    out = {}
    for x, lo, hi in h.bounds:
        out[dec.lo_name(x)] = lo
        out[dec.hi_name(x)] = hi
    return out


__all__ = [
    "Decomposition",
    "Hyperrectangle",
    "INF",
    "block",
    "decompose",
    "endpoint_assignment",
    "fresh_endpoint_names",
    "induced_rectangle",
    "is_finite",
]
