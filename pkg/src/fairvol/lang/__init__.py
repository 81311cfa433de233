"""Model language: parsing, SSA conversion and interpretation."""

from .ast import ParseError, Program
from .interp import OmegaSequences, OmegaUnderflow, interpret, monte_carlo, run_vectorized
from .parser import Problem, load_problem, parse_expression, parse_problem, parse_program
from .ssa import is_ssa, to_ssa

__all__ = [
    "OmegaSequences",
    "OmegaUnderflow",
    "ParseError",
    "Problem",
    "Program",
    "interpret",
    "is_ssa",
    "load_problem",
    "monte_carlo",
    "parse_expression",
    "parse_problem",
    "parse_program",
    "run_vectorized",
    "to_ssa",
]
