"""Anytime lower and upper bounds on the probability of a region.

A :class:`Sampler` repeatedly asks the solver for a box inside the region
that is disjoint from every box counted so far, optionally grows it one
endpoint at a time, and adds its probability mass to a running lower bound.
With guide densities (ADFs) each query also demands that every side of the
box carries at least ``lb`` guide mass, so large-mass boxes come first;
``lb`` shrinks geometrically when no such box remains.

Running a second sampler on the complement gives an upper bound, and
:func:`bound_pair` interleaves the two.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Mapping, Optional, Sequence

from .dist import Adf, DensityMap, adf_area_encoding, make_adf, rect_volume
from .logic.boxes import (
    Hyperrectangle,
    block,
    decompose,
    endpoint_assignment,
    induced_rectangle,
)
from .logic.extend import extend_exact
from .logic.formula import FALSE, TRUE, And, Formula, Not, conj, disj, free_vars, is_quantifier_free, make_atom
from .logic.qe import DEFAULT_DNF_CAP, QeBudgetExceeded, to_dnf
from .smt import SolverSession, SolverUnknown, extend_bound

log = logging.getLogger(__name__)


@dataclass
class SamplerConfig:
    """Knobs of the sampler.

    ``extension`` selects how boxes are grown: ``exact`` solves each 1-D
    extension in Python, ``solver`` uses the solver's optimization.
    ``lb_floor``: below this guide threshold the sampler drops the guide.
    """

    maximize: bool = True
    adf: str = "nstep"
    adf_steps: int = 5
    decay: float = 0.5
    literal_span: bool = False
    lb_floor: float = 1e-9
    extension: str = "exact"
    dnf_cap: int = DEFAULT_DNF_CAP
    seed: int = 0
    solver_path: Optional[str] = None
    query_timeout_ms: Optional[int] = None
    check_samples: bool = False

    def __post_init__(self):
        if not 0 < self.decay < 1:
            raise ValueError("decay rate must lie in (0, 1)")
        if self.adf_steps < 1:
            raise ValueError("ADF step count must be at least 1")
        if self.extension not in ("exact", "solver"):
            raise ValueError("extension must be 'exact' or 'solver'")


@dataclass(frozen=True)
class Progress:
    box: Hyperrectangle
    gained: float


@dataclass(frozen=True)
class NeedDecay:
    lb: Fraction


@dataclass(frozen=True)
class Exhausted:
    pass


EXHAUSTED = Exhausted()


class SoundnessError(AssertionError):
    """A sampled box failed a geometric soundness check."""


class Sampler:
    """State of one anytime lower-bound computation for ``VOL(phi, D)``."""

    def __init__(
        self,
        phi: Formula,
        densities: DensityMap,
        config: Optional[SamplerConfig] = None,
        dims: Optional[Sequence[str]] = None,
        neg_dnf: Optional[list] = None,
        session: Optional[SolverSession] = None,
        adfs: Optional[Mapping[str, Adf]] = None,
    ):
        self.config = config or SamplerConfig()
        self.phi = phi
        self.densities = densities
        order = list(densities)
        wanted = set(dims) if dims is not None else set(free_vars(phi))
        wanted |= set(free_vars(phi))
        missing = wanted - set(order)
        if missing:
            raise ValueError(f"no density for {sorted(missing)}")
        self.dims = tuple(v for v in order if v in wanted)
        try:
            self.dec = decompose(phi, self.dims, neg_dnf, self.config.dnf_cap)
            self.quantified = False
        except QeBudgetExceeded:
            log.warning("decomposition exceeds the DNF cap; using a quantified formula")
            self.dec = decompose(phi, self.dims, eliminate=False)
            self.quantified = True
        self.clauses = _clauses(self.dec.formula)
        self.vol = 0.0
        self.lb = Fraction(1)
        self.samples: list = []
        self.decays = 0
        self.exhausted = self.dec.formula == FALSE
        if adfs is None and self.config.adf != "none":
            adfs = {}
            for x in self.dims:
                a = make_adf(densities[x], x, self.config.adf, self.config.adf_steps, self.config.literal_span)
                if a is not None:
                    adfs[x] = a
        self.adfs = dict(adfs or {})
        self._own_session = session is None
        self._session = session
        self._ready = False

    # -- solver plumbing ------------------------------------------------------

    @property
    def session(self) -> SolverSession:
        if self._session is None:
            self._session = SolverSession(
                self.config.solver_path,
                seed=self.config.seed,
                timeout_ms=self.config.query_timeout_ms,
                quantified=self.quantified,
            )
        if not self._ready:
            self._session.declare(self.dec.endpoint_names)
            self._session.add_all(self.clauses)
            for x, a in self.adfs.items():
                self._session.add(adf_area_encoding(a, self._delta(x), self.dec.lo_name(x), self.dec.hi_name(x)))
            self._ready = True
        return self._session

    def _delta(self, x: str) -> str:
        return f"__delta_{x}"

    def close(self):
        if self._own_session and self._session is not None:
            self._session.close()

    @property
    def adf_mode(self) -> bool:
        return bool(self.adfs) and self.lb >= self.config.lb_floor

    # -- steps ------------------------------------------------------------------

    def decay(self):
        """Shrink the guide threshold by the decay rate."""
        self.lb *= Fraction(self.config.decay).limit_denominator(10**6)
        self.decays += 1

    def step(self):
        """Take one sample; returns Progress, NeedDecay or Exhausted."""
        if self.exhausted:
            return EXHAUSTED
        if not self.dims:
            # a constant region: true covers everything, false nothing
            self.exhausted = True
            if self.dec.formula == FALSE:
                return EXHAUSTED
            box = Hyperrectangle(())
            self.samples.append(box)
            self.vol += 1.0
            return Progress(box, 1.0)
        s = self.session
        names = self.dec.endpoint_names
        if self.adf_mode:
            guard = conj(*(make_atom({self._delta(x): 1}, ">=", self.lb) for x in self.adfs))
            model = s.check_and_model(guard, names)
            if model is None:
                if s.check_and_model(None, names) is None:
                    self.exhausted = True
                    return EXHAUSTED
                return NeedDecay(self.lb)
        else:
            model = s.check_and_model(None, names)
            if model is None:
                self.exhausted = True
                return EXHAUSTED
        box = induced_rectangle(model, self.dec)
        if self.config.maximize:
            box = self.maximize(box)
        if self.config.check_samples:
            self.check_box(box)
        gained = rect_volume(box, self.densities)
        self.vol += gained
        self.samples.append(box)
        blocker = block(box, self.dec)
        self.clauses.append(blocker)
        s.add(blocker)
        return Progress(box, gained)

    def maximize(self, box: Hyperrectangle) -> Hyperrectangle:
        """Grow the box greedily: each dimension in order, lower end then upper."""
        exact = self.config.extension == "exact" and not self.quantified
        for x in self.dims:
            for direction in ("lower", "upper"):
                if exact:
                    values = endpoint_assignment(box, self.dec)
                    name = self.dec.lo_name(x) if direction == "lower" else self.dec.hi_name(x)
                    end = extend_exact(self.clauses, values, name, direction == "upper")
                else:
                    try:
                        end = extend_bound(self.session, self.clauses, box, x, direction, self.dec)
                    except SolverUnknown:
                        continue
                box = box.with_bound(x, lo=end) if direction == "lower" else box.with_bound(x, hi=end)
        return box

    def check_box(self, box: Hyperrectangle):
        """Verify ``box => phi`` and disjointness from earlier samples."""
        for prev in self.samples:
            if box.overlaps(prev):
                raise SoundnessError(f"sample {box} overlaps {prev}")
        with SolverSession(self.config.solver_path, quantified=not is_quantifier_free(self.phi)) as chk:
            if chk.check_and_model(conj(box.to_formula(), Not(self.phi)), []) is not None:
                raise SoundnessError(f"sample {box} is not inside the region")

    def run(self, steps: int) -> float:
        """Advance up to ``steps`` samples, decaying as needed."""
        for _ in range(steps):
            if isinstance(self.advance(), Exhausted):
                break
        return self.vol

    def advance(self):
        """Step, applying decay after every NeedDecay, until a sample or exhaustion."""
        while True:
            out = self.step()
            if isinstance(out, NeedDecay):
                self.decay()
                continue
            return out


def _clauses(f: Formula) -> list:
    if f == TRUE:
        return []
    if isinstance(f, And):
        return list(f.args)
    return [f]


# ---------------------------------------------------------------------------
# bound pairs


@dataclass(frozen=True)
class BoundPair:
    lower: float
    upper: float

    def __post_init__(self):
        if not (0.0 <= self.lower <= self.upper + 1e-12):
            raise ValueError(f"invalid bounds [{self.lower}, {self.upper}]")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def contains(self, p: float, slack: float = 0.0) -> bool:
        return self.lower - slack <= p <= self.upper + slack


def clamp_bounds(lower: float, upper: float) -> BoundPair:
    """Bounds clipped to [0, 1] with the float accumulation kept consistent."""
    lower = min(max(lower, 0.0), 1.0)
    upper = min(max(upper, 0.0), 1.0)
    return BoundPair(min(lower, upper), upper)


class BoundRunner:
    """Two samplers, for a region and its complement, advanced in alternation."""

    def __init__(
        self,
        phi: Formula,
        densities: DensityMap,
        config: Optional[SamplerConfig] = None,
        dims: Optional[Sequence[str]] = None,
        pos_dnf: Optional[list] = None,
        neg_dnf: Optional[list] = None,
    ):
        config = config or SamplerConfig()
        if neg_dnf is None:
            neg_dnf = to_dnf(Not(phi), config.dnf_cap)
        if pos_dnf is None:
            pos_dnf = to_dnf(phi, config.dnf_cap)
        names = set(dims or ()) | set(free_vars(phi))
        for d in neg_dnf:
            for a in d:
                names |= a.vars
        neg_phi = _dnf_to_formula(neg_dnf)
        self.lower = Sampler(phi, densities, config, sorted(names), neg_dnf=neg_dnf)
        self.upper = Sampler(neg_phi, densities, config, sorted(names), neg_dnf=pos_dnf)
        self.rounds = 0

    @property
    def bounds(self) -> BoundPair:
        return clamp_bounds(self.lower.vol, 1.0 - self.upper.vol)

    @property
    def exhausted(self) -> bool:
        return self.lower.exhausted and self.upper.exhausted

    def round(self) -> BoundPair:
        """One step of each sampler, lower first."""
        self.lower.advance()
        self.upper.advance()
        self.rounds += 1
        return self.bounds

    def queries(self) -> int:
        return sum(s._session.stats.queries for s in (self.lower, self.upper) if s._session is not None)

    def close(self):
        self.lower.close()
        self.upper.close()


def _dnf_to_formula(dnf: list) -> Formula:
    return disj(*(conj(*d) for d in dnf))


def bound_pair(
    phi: Formula,
    densities: DensityMap,
    config: Optional[SamplerConfig] = None,
    max_rounds: Optional[int] = None,
    timeout: Optional[float] = None,
    stop: Optional[Callable[[BoundPair], bool]] = None,
    on_round: Optional[Callable[[int, BoundPair], None]] = None,
    dims: Optional[Sequence[str]] = None,
    pos_dnf: Optional[list] = None,
    neg_dnf: Optional[list] = None,
) -> BoundPair:
    """Anytime bounds ``(vol(phi), 1 - vol(not phi))`` within a round or time budget."""
    runner = BoundRunner(phi, densities, config, dims, pos_dnf, neg_dnf)
    start = time.monotonic()
    try:
        bounds = runner.bounds
        while not runner.exhausted:
            if max_rounds is not None and runner.rounds >= max_rounds:
                break
            if timeout is not None and time.monotonic() - start > timeout:
                break
            bounds = runner.round()
            if on_round is not None:
                on_round(runner.rounds, bounds)
            if stop is not None and stop(bounds):
                break
        return runner.bounds
    finally:
        runner.close()


__all__ = [
    "BoundPair",
    "BoundRunner",
    "Exhausted",
    "NeedDecay",
    "Progress",
    "Sampler",
    "SamplerConfig",
    "SoundnessError",
    "bound_pair",
    "clamp_bounds",
]
