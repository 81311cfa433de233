"""Linear real arithmetic formulas, quantifier elimination and box decomposition."""

from .boxes import Decomposition, Hyperrectangle, block, decompose, induced_rectangle
from .extend import extend_exact, limit_substitute
from .formula import (
    FALSE,
    TRUE,
    And,
    Atom,
    Const,
    Exists,
    Forall,
    Formula,
    LinExpr,
    Not,
    Or,
    atom,
    conj,
    disj,
    evaluate,
    exists,
    forall,
    free_vars,
    nnf,
    to_smtlib,
)
from .qe import QeBudgetExceeded, eliminate_quantifiers, to_dnf

__all__ = [
    "FALSE",
    "TRUE",
    "And",
    "Atom",
    "Const",
    "Decomposition",
    "Exists",
    "Forall",
    "Formula",
    "Hyperrectangle",
    "LinExpr",
    "Not",
    "Or",
    "QeBudgetExceeded",
    "atom",
    "block",
    "conj",
    "decompose",
    "disj",
    "eliminate_quantifiers",
    "evaluate",
    "exists",
    "extend_exact",
    "forall",
    "free_vars",
    "induced_rectangle",
    "limit_substitute",
    "nnf",
    "to_dnf",
    "to_smtlib",
]
