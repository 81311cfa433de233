"""SMT-LIB 2 sessions over a child solver process.

The session keeps a log of the commands issued in every push frame so that
a crashed solver can be restarted and brought back to the same assertion
stack.  Values are exchanged as exact rationals.
"""

from __future__ import annotations

import logging
import math
import os
import shutil
import subprocess
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional, Sequence

from .logic.boxes import Decomposition, Hyperrectangle, endpoint_assignment, is_finite
from .logic.formula import (
    Exists,
    Formula,
    free_vars,
    make_atom,
    rename,
    smt_symbol,
    to_smtlib,
)
from .logic.extend import limit_substitute

log = logging.getLogger(__name__)

SOLVER_ENV = "FAIRVOL_SOLVER"
SEARCH_TOL = Fraction(1, 2**20)


class SolverError(RuntimeError):
    """Protocol error or crash of the solver process."""


class SolverSpawnError(SolverError):
    """The solver binary could not be started."""


class SolverUnknown(SolverError):
    """The solver answered ``unknown``; ``reason`` carries its explanation."""

    def __init__(self, reason: str):
        super().__init__(f"solver returned unknown: {reason}")
        self.reason = reason


def resolve_solver(path: Optional[str] = None) -> str:
    """Solver binary: explicit path, then the environment override, then ``z3``."""
    candidate = path or os.environ.get(SOLVER_ENV) or "z3"
    found = shutil.which(candidate)
    if found is None:
        raise SolverSpawnError(f"solver binary not found: {candidate!r}")
    return found


# ---------------------------------------------------------------------------
# s-expressions


def parse_sexpr(text: str):
    """Parse one s-expression into nested lists of atom strings."""
    tokens = _tokenize(text)
    pos = 0

    def read():
        nonlocal pos
        tok = tokens[pos]
        pos += 1
        if tok == "(":
            out = []
            while tokens[pos] != ")":
                out.append(read())
            pos += 1
            return out
        return tok

    return read()


def _tokenize(text: str) -> list:
    tokens, i, n = [], 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
        elif ch in "()":
            tokens.append(ch)
            i += 1
        elif ch == "|":
            j = text.index("|", i + 1)
            tokens.append(text[i + 1 : j])
            i = j + 1
        elif ch == '"':
            j = i + 1
            while j < n and not (text[j] == '"' and text[j + 1 : j + 2] != '"'):
                j += 2 if text[j] == '"' else 1
            tokens.append(text[i : j + 1])
            i = j + 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in "()":
                j += 1
            tokens.append(text[i:j])
            i = j
    return tokens


@dataclass(frozen=True)
class ObjectiveValue:
    """Optimum reported by the solver.

    ``value`` is exact when ``infinite`` is 0; ``infinite`` is +1/-1 for an
    unbounded objective.  ``epsilon`` is set when the optimum is a supremum
    or infimum that is not attained (strict bound).
    """

    value: Optional[Fraction]
    infinite: int = 0
    epsilon: bool = False


def value_of(term) -> Fraction:
    """Exact value of a numeral term such as ``(- (/ 1.0 3.0))``."""
    if isinstance(term, str):
        return Fraction(term)
    head = term[0]
    if head == "-" and len(term) == 2:
        return -value_of(term[1])
    if head == "-":
        return value_of(term[1]) - sum(value_of(t) for t in term[2:])
    if head == "/":
        return value_of(term[1]) / value_of(term[2])
    if head == "+":
        return sum((value_of(t) for t in term[1:]), Fraction(0))
    if head == "*":
        out = Fraction(1)
        for t in term[1:]:
            out *= value_of(t)
        return out
    if head == "to_real":
        return value_of(term[1])
    raise SolverError(f"cannot read value {term!r}")


def objective_of(term) -> ObjectiveValue:
    """Interpret an optimum that may mention ``oo`` and ``epsilon``."""
    inf, eps, const = _linear_in_symbols(term)
    if inf:
        return ObjectiveValue(None, 1 if inf > 0 else -1)
    return ObjectiveValue(const, 0, eps != 0)


def _linear_in_symbols(term):
    """Return coefficients (oo, epsilon, constant) of a linear term."""
    if isinstance(term, str):
        if term == "oo":
            return Fraction(1), Fraction(0), Fraction(0)
        if term == "epsilon":
            return Fraction(0), Fraction(1), Fraction(0)
        return Fraction(0), Fraction(0), Fraction(term)
    head, args = term[0], [_linear_in_symbols(t) for t in term[1:]]
    if head == "+":
        return tuple(sum(parts, Fraction(0)) for parts in zip(*args))
    if head == "-":
        if len(args) == 1:
            return tuple(-p for p in args[0])
        first = args[0]
        rest = [tuple(sum(parts, Fraction(0)) for parts in zip(*args[1:]))]
        return tuple(a - b for a, b in zip(first, rest[0]))
    if head == "*":
        scale = Fraction(1)
        symbolic = None
        for a in args:
            if a[0] == 0 and a[1] == 0:
                scale *= a[2]
            elif symbolic is None:
                symbolic = a
            else:
                raise SolverError(f"non-linear objective value {term!r}")
        if symbolic is None:
            return Fraction(0), Fraction(0), scale
        return tuple(scale * p for p in symbolic)
    if head == "/":
        num, den = args
        if den[0] or den[1]:
            raise SolverError(f"non-linear objective value {term!r}")
        return tuple(p / den[2] for p in num)
    raise SolverError(f"cannot read objective {term!r}")


# ---------------------------------------------------------------------------
# session


@dataclass
class SolverStats:
    queries: int = 0
    seconds: float = 0.0
    restarts: int = 0


@dataclass
class _Frame:
    commands: list = field(default_factory=list)
    declared: set = field(default_factory=set)


class SolverSession:
    """One incremental solver process.

    A session has a single owner; distinct sessions are independent.
    """

    def __init__(
        self,
        solver_path: Optional[str] = None,
        seed: int = 0,
        timeout_ms: Optional[int] = None,
        quantified: bool = False,
    ):
        self.path = resolve_solver(solver_path)
        self.seed = seed
        self.timeout_ms = timeout_ms
        self.logic = "LRA" if quantified else "QF_LRA"
        self.stats = SolverStats()
        self._frames = [_Frame()]
        self._fresh = 0
        self._proc = None
        self._start()

    # -- process management -------------------------------------------------

    def _start(self):
        try:
            self._proc = subprocess.Popen(
                [self.path, "-in", "-smt2"],
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.STDOUT,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise SolverSpawnError(f"cannot start solver {self.path!r}: {exc}") from exc
        self._raw("(set-option :print-success false)")
        self._raw("(set-option :produce-models true)")
        self._raw(f"(set-option :random-seed {self.seed})")
        self._raw(f"(set-option :smt.random_seed {self.seed})")
        if self.timeout_ms:
            self._raw(f"(set-option :timeout {int(self.timeout_ms)})")
        self._raw(f"(set-logic {self.logic})")

    def restart(self):
        """Kill the process and replay every frame's commands."""
        self.stats.restarts += 1
        self._kill()
        self._start()
        for depth, frame in enumerate(self._frames):
            if depth > 0:
                self._raw("(push 1)")
            for cmd in frame.commands:
                self._raw(cmd)

    def _kill(self):
        if self._proc is not None:
            try:
                self._proc.kill()
                self._proc.wait(timeout=5)
            except (OSError, subprocess.TimeoutExpired):
                pass
            self._proc = None

    def close(self):
        if self._proc is not None:
            try:
                self._raw("(exit)")
                self._proc.wait(timeout=2)
            except (OSError, SolverError, subprocess.TimeoutExpired):
                pass
            self._kill()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def __del__(self):
        try:
            self._kill()
        except Exception:
            pass

    def _raw(self, cmd: str):
        try:
            self._proc.stdin.write(cmd + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError, AttributeError) as exc:
            raise SolverError(f"solver pipe closed: {exc}") from exc

    def _read(self) -> str:
        lines, depth = [], 0
        while True:
            line = self._proc.stdout.readline()
            if not line:
                raise SolverError("solver closed its output: " + "".join(lines))
            lines.append(line)
            depth += _paren_balance(line)
            text = "".join(lines).strip()
            if text and depth <= 0:
                break
        if text.startswith("(error"):
            raise SolverError(text)
        return text

    def _dead(self) -> bool:
        return self._proc is None or self._proc.poll() is not None

    def _send(self, cmd: str, record: bool = True):
        if record:
            self._frames[-1].commands.append(cmd)
        if self._dead():
            log.warning("solver process died; restarting and replaying")
            self.restart()  # replays the command just recorded
            if record:
                return
        self._raw(cmd)

    def _query(self, cmd: str) -> str:
        """Send a command that produces output; restart once on a crash."""
        for attempt in (0, 1):
            try:
                self._raw(cmd)
                return self._read()
            except SolverError:
                if attempt or (self._proc is not None and self._proc.poll() is None):
                    raise
                log.warning("solver process died; restarting and replaying")
                self.restart()
        raise AssertionError("unreachable")

    # -- assertion stack ----------------------------------------------------

    @property
    def depth(self) -> int:
        return len(self._frames) - 1

    def declared(self) -> set:
        out = set()
        for f in self._frames:
            out |= f.declared
        return out

    def declare(self, names: Iterable[str]):
        known = self.declared()
        for name in sorted(set(names) - known):
            self._send(f"(declare-const {smt_symbol(name)} Real)")
            self._frames[-1].declared.add(name)

    def push(self):
        if self._dead():
            self.restart()
        self._raw("(push 1)")
        self._frames.append(_Frame())

    def pop(self):
        if len(self._frames) == 1:
            raise SolverError("pop without matching push")
        self._frames.pop()
        if self._dead():
            self.restart()  # the replay already omits the popped frame
            return
        self._raw("(pop 1)")

    def add(self, f: Formula):
        """Assert ``f``; top-level existentials become fresh constants."""
        while isinstance(f, Exists):
            mapping = {}
            for v in f.vars:
                self._fresh += 1
                mapping[v] = f"{v}!{self._fresh}"
            f = rename(f.body, mapping)
        self.declare(free_vars(f))
        self._send(f"(assert {to_smtlib(f)})")

    def add_all(self, fs: Iterable[Formula]):
        for f in fs:
            self.add(f)

    # -- queries --------------------------------------------------------------

    def check(self) -> str:
        start = time.perf_counter()
        # quantified queries go through z3's LRA elimination tactic, which is complete
        answer = self._query("(check-sat-using (then qe smt))" if self.logic == "LRA" else "(check-sat)")
        self.stats.queries += 1
        self.stats.seconds += time.perf_counter() - start
        if answer not in ("sat", "unsat", "unknown"):
            raise SolverError(f"unexpected check-sat answer {answer!r}")
        return answer

    def check_sat(self) -> bool:
        answer = self.check()
        if answer == "unknown":
            raise SolverUnknown(self.reason_unknown())
        return answer == "sat"

    def reason_unknown(self) -> str:
        try:
            return self._query("(get-info :reason-unknown)")
        except SolverError as exc:
            return str(exc)

    def get_values(self, names: Sequence[str]) -> dict:
        names = list(names)
        if not names:
            return {}
        text = self._query("(get-value (" + " ".join(smt_symbol(n) for n in names) + "))")
        out = {}
        for name, term in parse_sexpr(text):
            out[name] = value_of(term)
        return out

    def check_and_model(self, f: Optional[Formula], names: Sequence[str]) -> Optional[dict]:
        """Model of the current assertions plus ``f`` restricted to ``names``.

        Returns ``None`` when unsatisfiable and raises :class:`SolverUnknown`
        when the solver cannot decide.  ``f`` is not kept.
        """
        self.push()
        try:
            if f is not None:
                self.add(f)
            self.declare(names)
            if not self.check_sat():
                return None
            return self.get_values(names)
        finally:
            self.pop()

    def optimize(self, name: str, maximize: bool = True) -> tuple:
        """Optimize one variable in a scoped frame.

        Returns ``(ObjectiveValue, model value of name)``; raises
        :class:`SolverUnknown` if undecided and returns ``(None, None)`` on UNSAT.
        """
        self.push()
        try:
            self.declare([name])
            self._send(f"({'maximize' if maximize else 'minimize'} {smt_symbol(name)})")
            if not self.check_sat():
                return None, None
            text = self._query("(get-objectives)")
            parsed = parse_sexpr(text)
            entries = [e for e in parsed[1:] if isinstance(e, list)]
            objective = objective_of(entries[0][1])
            current = self.get_values([name])[name]
            return objective, current
        finally:
            self.pop()


def _paren_balance(line: str) -> int:
    depth, in_str, in_sym = 0, False, False
    for ch in line:
        if in_str:
            in_str = ch != '"'
        elif in_sym:
            in_sym = ch != "|"
        elif ch == '"':
            in_str = True
        elif ch == "|":
            in_sym = True
        elif ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
    return depth


# ---------------------------------------------------------------------------
# greedy box extension through the solver


def extend_bound(
    s: SolverSession,
    psi: Sequence[Formula],
    h: Hyperrectangle,
    dim: str,
    direction: str,
    dec: Decomposition,
    use_objectives: bool = True,
):
    """Push one endpoint of ``h`` as far as ``psi`` allows, others fixed.

    ``psi`` is the list of constraints over endpoint variables that the box
    must keep satisfying.  Returns the new endpoint (a Fraction or +-inf).
    On solver ``unknown`` the original endpoint is kept.
    """
    if direction not in ("lower", "upper"):
        raise ValueError("direction must be 'lower' or 'upper'")
    upper = direction == "upper"
    target = dec.hi_name(dim) if upper else dec.lo_name(dim)
    values = endpoint_assignment(h, dec)
    original = values[target]
    if not is_finite(original):
        return original
    fixed = {k: v for k, v in values.items() if k != target}
    constraints = [limit_substitute(f, fixed) for f in psi]
    s.push()
    try:
        s.add_all(c for c in constraints)
        s.declare([target])
        if use_objectives:
            return _extend_with_objective(s, target, original, upper)
        return _extend_with_search(s, constraints, target, original, upper)
    except SolverUnknown:
        return original
    finally:
        s.pop()


def _probe(s: SolverSession, target: str, value: Fraction) -> bool:
    return s.check_and_model(make_atom({target: 1}, "=", value), []) is not None


def _extend_with_objective(s: SolverSession, target: str, original: Fraction, upper: bool):
    objective, _ = s.optimize(target, maximize=upper)
    if objective is None:
        return original
    if objective.infinite:
        return math.inf if upper else -math.inf
    best = objective.value
    if not objective.epsilon:
        return best if (best >= original if upper else best <= original) else original
    # supremum not attained: back off inside the open end and snap to a model
    width = SEARCH_TOL * max(1, abs(best))
    op = ">=" if upper else "<="
    goal = best - width if upper else best + width
    model = s.check_and_model(make_atom({target: 1}, op, goal), [target])
    if model is None:
        return original
    value = model[target]
    return value if (value >= original if upper else value <= original) else original


def _extend_with_search(s: SolverSession, constraints, target: str, original: Fraction, upper: bool):
    """Exponential steps to bracket the extreme point, then bisection."""
    sign = 1 if upper else -1
    good = original
    step = Fraction(1)
    bad = None
    for _ in range(64):
        candidate = original + sign * step
        if _probe(s, target, candidate):
            good = candidate
            step *= 2
        else:
            bad = candidate
            break
    if bad is None:
        far = math.inf if upper else -math.inf
        at_limit = [limit_substitute(c, {target: far}) for c in constraints]
        s.push()
        try:
            s.add_all(at_limit)
            return far if s.check_sat() else good
        finally:
            s.pop()
    while abs(bad - good) > SEARCH_TOL * max(1, abs(good)):
        mid = (good + bad) / 2
        if _probe(s, target, mid):
            good = mid
        else:
            bad = mid
    return good


__all__ = [
    "ObjectiveValue",
    "SolverError",
    "SolverSession",
    "SolverSpawnError",
    "SolverUnknown",
    "extend_bound",
    "parse_sexpr",
    "resolve_solver",
    "value_of",
]
