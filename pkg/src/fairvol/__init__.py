"""Fairness verification of probabilistic decision programs by volume bounds."""

from .dist import Gaussian, Step, make_adf, rect_volume
from .fairness import FairnessProblem, Verdict, fair_verify, ratio_bounds
from .lang import load_problem, parse_problem, parse_program
from .pvc import Projector, generate_pvc, parse_formula
from .volume import BoundPair, Sampler, SamplerConfig, bound_pair

__version__ = "0.1.0"

__all__ = [
    "BoundPair",
    "FairnessProblem",
    "Gaussian",
    "Projector",
    "Sampler",
    "SamplerConfig",
    "Step",
    "Verdict",
    "bound_pair",
    "fair_verify",
    "generate_pvc",
    "load_problem",
    "make_adf",
    "parse_formula",
    "parse_problem",
    "parse_program",
    "ratio_bounds",
    "rect_volume",
]
