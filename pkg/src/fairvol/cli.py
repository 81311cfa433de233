"""Command-line interface: ``fairvol verify``, ``fairvol bench`` and ``fairvol trace-lint``.

Exit codes of ``verify``: 0 fair (or probability bounds computed), 1 unfair,
2 unknown, 64 bad input, 69 solver unavailable.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from .dist import ADF_KINDS
from .fairness import FairnessProblem, TraceRecord, closed_pvc, event_of, fair_verify
from .lang.ast import ParseError
from .lang.parser import load_problem
from .pvc import Projector, dump_smtlib
from .smt import SolverSpawnError
from .volume import BoundRunner, SamplerConfig

log = logging.getLogger("fairvol")

EXIT_FAIR, EXIT_UNFAIR, EXIT_UNKNOWN = 0, 1, 2
EXIT_USAGE, EXIT_UNAVAILABLE = 64, 69
EXIT_CODES = {"FAIR": EXIT_FAIR, "UNFAIR": EXIT_UNFAIR, "UNKNOWN": EXIT_UNKNOWN}


@dataclass
class RunConfig:
    """Options shared by ``verify`` and ``bench``.

    ``epsilon`` of ``None`` defers to the file's ``epsilon:`` directive,
    falling back to 0.15.
    """

    epsilon: Optional[float] = None
    timeout_secs: int = 900
    adf: str = "nstep"
    adf_steps: int = 5
    decay: float = 0.5
    maximize: bool = True
    max_rounds: Optional[int] = None
    seed: int = 0
    solver_path: Optional[str] = None
    width: float = 0.02

    def __post_init__(self):
        if self.epsilon is not None and not 0 <= self.epsilon < 1:
            raise ValueError("epsilon must lie in [0, 1)")
        if not 0 < self.decay < 1:
            raise ValueError("decay must lie in (0, 1)")
        if self.adf_steps < 1:
            raise ValueError("adf-steps must be at least 1")
        if self.adf not in ADF_KINDS:
            raise ValueError(f"adf must be one of {ADF_KINDS}")

    def sampler_config(self) -> SamplerConfig:
        return SamplerConfig(
            maximize=self.maximize,
            adf=self.adf,
            adf_steps=self.adf_steps,
            decay=self.decay,
            seed=self.seed,
            solver_path=self.solver_path,
        )


@dataclass
class Outcome:
    """Result line, exit status and counters of one run."""

    line: str
    status: int
    rounds: int = 0
    queries: int = 0
    seconds: float = 0.0
    lower: float = 0.0
    upper: float = math.inf


# ---------------------------------------------------------------------------
# runs


class TraceWriter:
    """JSON-lines trace plus an optional CSV with one row per round."""

    def __init__(self, jsonl: Optional[Path], csv_path: Optional[Path]):
        self._json = open(jsonl, "w") if jsonl else None
        self._csv_file = open(csv_path, "w", newline="") if csv_path else None
        self._csv = None

    def __call__(self, rec: TraceRecord):
        data = rec.to_json()
        if self._json is not None:
            self._json.write(json.dumps(data) + "\n")
            self._json.flush()
        if self._csv_file is not None:
            row = {"round": data["round"]}
            for k, (lo, up) in data["bounds"].items():
                row[f"{k}_lower"], row[f"{k}_upper"] = lo, up
            row["ratio_lower"], row["ratio_upper"] = data["ratio"]
            row["queries"], row["elapsed"] = data["queries"], data["elapsed"]
            if self._csv is None:
                self._csv = csv.DictWriter(self._csv_file, fieldnames=list(row))
                self._csv.writeheader()
            self._csv.writerow(row)

    def close(self):
        for f in (self._json, self._csv_file):
            if f is not None:
                f.close()


def run_verify(path: Path, cfg: RunConfig, event: Optional[str] = None, on_round=None) -> Outcome:
    """Verify one file: fairness by default, probability bounds with an event."""
    problem = load_problem(path)
    event = event or problem.directives.get("event")
    if event is not None:
        return run_event(problem, event, cfg, on_round)
    fp = FairnessProblem.from_problem(problem, cfg.epsilon)
    res = fair_verify(fp, cfg.sampler_config(), cfg.timeout_secs, cfg.max_rounds, on_round)
    if res.error:
        log.warning("stopped early: %s", res.error)
    v = res.verdict
    return Outcome(str(v), EXIT_CODES[v.kind], res.rounds, res.queries, res.elapsed, v.ratio_lower, v.ratio_upper)


def run_event(problem, event: str, cfg: RunConfig, on_round=None) -> Outcome:
    """Bounds on the probability of ``event`` at the end of the program."""
    pvc, names = closed_pvc(problem)
    proj = Projector(pvc).project(event_of(event, names, pvc.bool_defs))
    runner = BoundRunner(proj.formula, pvc.densities, cfg.sampler_config(), proj.vars, proj.dnf, proj.neg_dnf)
    start = time.monotonic()
    try:
        b = runner.bounds
        while not runner.exhausted and b.width > cfg.width:
            if cfg.max_rounds is not None and runner.rounds >= cfg.max_rounds:
                break
            if time.monotonic() - start > cfg.timeout_secs:
                break
            b = runner.round()
            if on_round is not None:
                on_round(TraceRecord(runner.rounds, {"event": b}, (b.lower, b.upper), runner.queries(), time.monotonic() - start))
        return Outcome(
            f"lower={b.lower:.9g} upper={b.upper:.9g}",
            0,
            runner.rounds,
            runner.queries(),
            time.monotonic() - start,
            b.lower,
            b.upper,
        )
    finally:
        runner.close()


# ---------------------------------------------------------------------------
# benchmarks

BENCH_COLUMNS = ("fixture", "result", "expected", "match", "rounds", "queries", "seconds", "lower", "upper")


def expectation_met(expected: Optional[str], out: Outcome) -> Optional[bool]:
    """``None`` when nothing is expected; numbers must lie within the bounds."""
    if not expected:
        return None
    try:
        value = float(expected)
    except ValueError:
        return out.line.split()[0] == expected.strip().upper()
    return out.lower - 1e-9 <= value <= out.upper + 1e-9


def run_bench(directory: Path, cfg: RunConfig) -> list:
    """One row per ``*.fair`` file; failures become ERROR rows."""
    rows = []
    for path in sorted(Path(directory).glob("*.fair")):
        start = time.monotonic()
        expected = None
        try:
            expected = load_problem(path).directives.get("expect")
            out = run_verify(path, cfg)
            match = expectation_met(expected, out)
            row = {
                "fixture": path.stem,
                "result": out.line.split()[0] if out.line.startswith(("FAIR", "UNFAIR", "UNKNOWN")) else "BOUNDS",
                "expected": expected or "",
                "match": "" if match is None else ("yes" if match else "no"),
                "rounds": out.rounds,
                "queries": out.queries,
                "seconds": round(out.seconds, 3),
                "lower": out.lower,
                "upper": out.upper,
            }
        except (ParseError, ValueError, OSError) as exc:
            log.error("%s: %s", path.name, exc)
            row = {
                "fixture": path.stem,
                "result": "ERROR",
                "expected": expected or "",
                "match": "no" if expected else "",
                "rounds": 0,
                "queries": 0,
                "seconds": round(time.monotonic() - start, 3),
                "lower": "",
                "upper": "",
            }
        rows.append(row)
    return rows


def write_table(rows: list, stream) -> None:
    w = csv.DictWriter(stream, fieldnames=BENCH_COLUMNS)
    w.writeheader()
    for r in rows:
        w.writerow(r)


# ---------------------------------------------------------------------------
# trace lint


def lint_trace(lines: Sequence[str]) -> list:
    """Monotonicity violations in a JSON-lines trace (empty when clean)."""
    problems = []
    prev = None
    for n, text in enumerate(lines, 1):
        if not text.strip():
            continue
        try:
            rec = json.loads(text)
        except json.JSONDecodeError as exc:
            problems.append(f"line {n}: not JSON ({exc.msg})")
            continue
        bounds = {k: (_val(lo), _val(up)) for k, (lo, up) in rec.get("bounds", {}).items()}
        ratio = tuple(_val(x) for x in rec.get("ratio", (0, "inf")))
        for k, (lo, up) in bounds.items():
            if not 0 <= lo <= up <= 1:
                problems.append(f"line {n}: {k} bounds [{lo}, {up}] are not ordered within [0, 1]")
        if ratio[0] > ratio[1]:
            problems.append(f"line {n}: ratio lower {ratio[0]} exceeds upper {ratio[1]}")
        if prev is not None:
            p_round, p_bounds, p_ratio, p_queries = prev
            if rec.get("round", 0) <= p_round:
                problems.append(f"line {n}: round does not increase")
            if rec.get("queries", 0) < p_queries:
                problems.append(f"line {n}: query count decreases")
            for k, (lo, up) in bounds.items():
                if k in p_bounds:
                    plo, pup = p_bounds[k]
                    if lo < plo:
                        problems.append(f"line {n}: {k} lower bound decreases")
                    if up > pup:
                        problems.append(f"line {n}: {k} upper bound increases")
            if ratio[0] < p_ratio[0]:
                problems.append(f"line {n}: ratio lower bound decreases")
            if ratio[1] > p_ratio[1]:
                problems.append(f"line {n}: ratio upper bound increases")
        prev = (rec.get("round", 0), bounds, ratio, rec.get("queries", 0))
    return problems


def _val(x) -> float:
    return float(x)  # float() accepts "inf" and "-inf"


# ---------------------------------------------------------------------------
# argument parsing


def _add_run_flags(p: argparse.ArgumentParser):
    p.add_argument("--epsilon", type=float, default=None, help="fairness slack (default: file directive or 0.15)")
    p.add_argument("--timeout", type=int, default=900, help="wall-clock budget in seconds")
    p.add_argument("--adf", choices=ADF_KINDS, default="nstep", help="guide density kind")
    p.add_argument("--adf-steps", type=int, default=5, help="segments of nstep guides")
    p.add_argument("--decay", type=float, default=0.5, help="guide threshold decay rate")
    p.add_argument("--no-maximize", action="store_true", help="skip box maximization")
    p.add_argument("--max-rounds", type=int, default=None, help="round budget")
    p.add_argument("--seed", type=int, default=0, help="solver random seed")
    p.add_argument("--solver", default=None, help="solver binary (else $FAIRVOL_SOLVER, else z3)")
    p.add_argument("--width", type=float, default=0.02, help="target bound width in event mode")


def _config(args) -> RunConfig:
    return RunConfig(
        epsilon=args.epsilon,
        timeout_secs=args.timeout,
        adf=args.adf,
        adf_steps=args.adf_steps,
        decay=args.decay,
        maximize=not args.no_maximize,
        max_rounds=args.max_rounds,
        seed=args.seed,
        solver_path=args.solver,
        width=args.width,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fairvol", description="Fairness verification by volume bounds.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="verify one program")
    v.add_argument("file", type=Path)
    _add_run_flags(v)
    v.add_argument("--event", default=None, help="bound Pr[event] instead of checking fairness")
    v.add_argument("--trace", type=Path, default=None, help="JSON-lines trace output")
    v.add_argument("--csv", type=Path, default=None, help="CSV trace output")
    v.add_argument("--dump-pvc", action="store_true", help="print the verification condition and exit")

    b = sub.add_parser("bench", help="run every *.fair file of a directory")
    b.add_argument("directory", type=Path)
    _add_run_flags(b)
    b.add_argument("--csv", type=Path, default=None, help="write the table here instead of stdout")

    t = sub.add_parser("trace-lint", help="check a trace file for monotone bounds")
    t.add_argument("file", type=Path)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "trace-lint":
            return _trace_lint(args.file)
        cfg = _config(args)
        if args.command == "bench":
            return _bench(args.directory, cfg, args.csv)
        return _verify(args, cfg)
    except ParseError as exc:
        print(f"{getattr(args, 'file', '')}:{exc.line}:{exc.col}: error: {exc.message}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SolverSpawnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNAVAILABLE


def _verify(args, cfg: RunConfig) -> int:
    if args.dump_pvc:
        pvc, _ = closed_pvc(load_problem(args.file))
        sys.stdout.write(dump_smtlib(pvc))
        return 0
    writer = TraceWriter(args.trace, args.csv)
    try:
        out = run_verify(args.file, cfg, args.event, writer)
    finally:
        writer.close()
    print(out.line)
    return out.status


def _bench(directory: Path, cfg: RunConfig, csv_path: Optional[Path]) -> int:
    if not directory.is_dir():
        raise ValueError(f"{directory} is not a directory")
    rows = run_bench(directory, cfg)
    if csv_path is not None:
        with open(csv_path, "w", newline="") as f:
            write_table(rows, f)
    write_table(rows, sys.stdout)
    return 1 if any(r["match"] == "no" and r["result"] != "ERROR" for r in rows) else 0


def _trace_lint(path: Path) -> int:
    problems = lint_trace(path.read_text().splitlines())
    for p in problems:
        print(p)
    if not problems:
        print("ok")
    return 1 if problems else 0


__all__ = ["RunConfig", "build_parser", "lint_trace", "main", "run_bench", "run_event", "run_verify"]


if __name__ == "__main__":
    sys.exit(main())
