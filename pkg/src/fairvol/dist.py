"""Univariate distributions, approximate density functions and box volume.

Gaussians are evaluated with the complementary error function from the
standard library, choosing the tail that avoids cancellation.  Step
distributions are piecewise constant.  An :class:`Adf` is a piecewise
constant stand-in for a density whose area over an interval is expressible
in linear arithmetic; it only guides sampling and never enters the volume.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .logic.boxes import Hyperrectangle, is_finite
from .logic.formula import FALSE, Exists, Formula, conj, disj, make_atom

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class Gaussian:
    mean: float
    std: float

    def __post_init__(self):
        if not self.std > 0:
            raise ValueError(f"Gaussian standard deviation must be positive, got {self.std}")

    @classmethod
    def from_variance(cls, mean: float, variance: float) -> "Gaussian":
        if not variance > 0:
            raise ValueError(f"Gaussian variance must be positive, got {variance}")
        return cls(float(mean), math.sqrt(variance))

    def pdf(self, x: float) -> float:
        z = (x - self.mean) / self.std
        return math.exp(-0.5 * z * z) / (self.std * math.sqrt(2 * math.pi))

    def cdf(self, x) -> float:
        if not math.isfinite(x):
            return 0.0 if x < 0 else 1.0
        return 0.5 * math.erfc(-(float(x) - self.mean) / (self.std * SQRT2))

    def sf(self, x) -> float:
        """Upper tail ``1 - cdf(x)`` without cancellation."""
        if not math.isfinite(x):
            return 1.0 if x < 0 else 0.0
        return 0.5 * math.erfc((float(x) - self.mean) / (self.std * SQRT2))

    def mass(self, lo, hi) -> float:
        """Probability of ``[lo, hi]``, using whichever tail is more accurate."""
        if not lo < hi:
            return 0.0
        if lo >= self.mean:
            return max(self.sf(lo) - self.sf(hi), 0.0)
        return max(self.cdf(hi) - self.cdf(lo), 0.0)

    def span(self, literal: bool = False) -> tuple:
        """Default region for ADF construction: three standard deviations each side.

        With ``literal`` the half-width is three times the variance instead.
        """
        half = 3 * (self.std**2 if literal else self.std)
        return self.mean - half, self.mean + half

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.normal(self.mean, self.std, size=n)


@dataclass(frozen=True)
class Step:
    """Piecewise-constant density; ``segments`` holds ``(lo, hi, weight)``
    where ``weight`` is the probability mass of ``[lo, hi)``."""

    segments: tuple

    def __post_init__(self):
        prev_hi = -math.inf
        for lo, hi, w in self.segments:
            if not lo < hi:
                raise ValueError(f"step segment needs lo < hi, got ({lo}, {hi})")
            if not w > 0:
                raise ValueError(f"step segment weight must be positive, got {w}")
            if lo < prev_hi:
                raise ValueError("step segments must be sorted and disjoint")
            prev_hi = hi

    @classmethod
    def normalized(cls, segments: Sequence[tuple]) -> "Step":
        segs = sorted((float(lo), float(hi), float(w)) for lo, hi, w in segments)
        total = sum(w for _, _, w in segs)
        if total <= 0:
            raise ValueError("step weights must be positive")
        if abs(total - 1.0) > 1e-12:
            warnings.warn(f"step weights sum to {total}; normalizing to 1", stacklevel=2)
            segs = [(lo, hi, w / total) for lo, hi, w in segs]
        return cls(tuple(segs))

    @property
    def mean(self) -> float:
        return sum(w * (lo + hi) / 2 for lo, hi, w in self.segments)

    def pdf(self, x: float) -> float:
        for lo, hi, w in self.segments:
            if lo <= x < hi:
                return w / (hi - lo)
        return 0.0

    def cdf(self, x) -> float:
        if not math.isfinite(x):
            return 0.0 if x < 0 else 1.0
        x = float(x)
        total = 0.0
        for lo, hi, w in self.segments:
            if x >= hi:
                total += w
            elif x > lo:
                total += w * (x - lo) / (hi - lo)
        return min(total, 1.0)

    def mass(self, lo, hi) -> float:
        if not lo < hi:
            return 0.0
        total = 0.0
        for a, b, w in self.segments:
            left = a if not is_finite(lo) else max(a, float(lo))
            right = b if not is_finite(hi) else min(b, float(hi))
            if right > left:
                total += w * (right - left) / (b - a)
        return min(total, 1.0)

    def span(self, literal: bool = False) -> tuple:
        return self.segments[0][0], self.segments[-1][1]

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        # inverse CDF of the piecewise-linear CDF
        xs = [self.segments[0][0]]
        ps = [0.0]
        for lo, hi, w in self.segments:
            if lo > xs[-1]:
                xs.append(lo)
                ps.append(ps[-1])
            xs.append(hi)
            ps.append(ps[-1] + w)
        ps = np.asarray(ps) / ps[-1]
        return np.interp(rng.random(n), ps, xs)


Distribution = Union[Gaussian, Step]
DensityMap = Mapping[str, Distribution]


def cdf(d: Distribution, x) -> float:
    return d.cdf(x)


def rect_volume(h: Hyperrectangle, densities: DensityMap) -> float:
    """Product over dimensions of the probability mass of each side."""
    vol = 1.0
    for name, lo, hi in h.bounds:
        vol *= densities[name].mass(lo, hi)
        if vol == 0.0:
            return 0.0
    return vol


# ---------------------------------------------------------------------------
# approximate density functions

ADF_KINDS = ("none", "uniform", "nstep")


@dataclass(frozen=True)
class Adf:
    """Piecewise-constant guide density: ``(a_i, b_i, c_i)`` with height ``c_i``."""

    var: str
    segments: tuple

    @property
    def support(self) -> tuple:
        return self.segments[0][0], self.segments[-1][1]

    def area(self, lo, hi) -> Fraction:
        """Exact integral of the step function over ``[lo, hi]``."""
        total = Fraction(0)
        for a, b, c in self.segments:
            left = a if not is_finite(lo) else max(a, Fraction(lo))
            right = b if not is_finite(hi) else min(b, Fraction(hi))
            if right > left:
                total += c * (right - left)
        return total

    def max_area(self) -> Fraction:
        return sum((c * (b - a) for a, b, c in self.segments), Fraction(0))


def _rational(x: float, denom: int = 10**6) -> Fraction:
    return Fraction(x).limit_denominator(denom)


def make_adf(
    d: Distribution,
    var: str,
    kind: str = "nstep",
    n: int = 5,
    literal_span: bool = False,
) -> Optional[Adf]:
    """Guide density for ``d``; ``None`` for kind ``none``.

    ``uniform`` is one segment at the average density over the span and
    ``nstep`` uses ``n`` equal-width segments whose heights are the exact
    segment mass divided by the width.  Step distributions are their own ADF.
    """
    if kind not in ADF_KINDS:
        raise ValueError(f"unknown ADF kind {kind!r}; expected one of {ADF_KINDS}")
    if kind == "none":
        return None
    if isinstance(d, Step):
        segs = tuple(
            (_rational(lo), _rational(hi), _rational(w / (hi - lo))) for lo, hi, w in d.segments
        )
        return Adf(var, segs)
    if kind == "nstep" and n < 1:
        raise ValueError("nstep ADF needs at least one segment")
    lo, hi = d.span(literal_span)
    lo, hi = _rational(lo), _rational(hi)
    count = 1 if kind == "uniform" else n
    width = (hi - lo) / count
    segs = []
    for i in range(count):
        a, b = lo + i * width, lo + (i + 1) * width
        height = d.mass(float(a), float(b)) / float(b - a)
        segs.append((a, b, _rational(height, 10**9)))
    return Adf(var, tuple(segs))


def _cumulative_cases(adf: Adf, x: str, out: str) -> Formula:
    """``out = integral of the ADF from -inf to x`` as a case split on x."""
    cases = []
    first = adf.segments[0][0]
    cases.append(conj(make_atom({x: 1}, "<=", first), make_atom({out: 1}, "=", 0)))
    acc = Fraction(0)
    prev_end = first
    for a, b, c in adf.segments:
        if a > prev_end:  # flat gap between segments
            cases.append(
                conj(make_atom({x: 1}, ">=", prev_end), make_atom({x: 1}, "<=", a), make_atom({out: 1}, "=", acc))
            )
        # out = acc + c * (x - a)
        cases.append(
            conj(
                make_atom({x: 1}, ">=", a),
                make_atom({x: 1}, "<=", b),
                make_atom({out: 1, x: -c}, "=", acc - c * a),
            )
        )
        acc += c * (b - a)
        prev_end = b
    cases.append(conj(make_atom({x: 1}, ">=", prev_end), make_atom({out: 1}, "=", acc)))
    return disj(*cases)


def adf_area_encoding(adf: Adf, delta: str, lo: str, hi: str) -> Formula:
    """Linear formula forcing ``delta`` to the ADF area over ``[lo, hi]``.

    The area is ``C(hi) - C(lo)`` where ``C`` is the piecewise-linear
    cumulative ADF; the two values of ``C`` are existentially quantified.
    For ``lo <= hi`` this equals ``sum_i c_i * max(min(b_i, hi) - max(a_i, lo), 0)``.
    """
    c_hi, c_lo = f"{delta}__chi", f"{delta}__clo"
    body = conj(
        _cumulative_cases(adf, hi, c_hi),
        _cumulative_cases(adf, lo, c_lo),
        make_atom({delta: 1, c_hi: -1, c_lo: 1}, "=", 0),
    )
    if body == FALSE:
        return FALSE
    return Exists((c_hi, c_lo), body)


__all__ = [
    "ADF_KINDS",
    "Adf",
    "DensityMap",
    "Distribution",
    "Gaussian",
    "Step",
    "adf_area_encoding",
    "cdf",
    "make_adf",
    "rect_volume",
]
