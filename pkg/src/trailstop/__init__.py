"""Optimal stopping of a spectrally negative Lévy process whose ruin line trails its running maximum."""

from .errors import (DegenerateRootsError, DomainError, ModelError, PoleError, PotentialDivergenceError,
                     QuadratureError, TrailStopError)
from .levy import ExpJumps, LevyModel, RootSet, laplace_exponent, solve_roots
from .payoff import ExpPayoff, PayoffBundle, make_bundle, potential
from .scale import ScaleFunction, build_scale
from .solver import (LevelOptimum, Problem, SolveResult, StrategyCurve, big_f, discount_factor,
                     integral_value, objective, optimize_level, solve_curve, value_surface, verify_qvi)

__version__ = "0.1.0"

__all__ = [
    "DegenerateRootsError", "DomainError", "ModelError", "PoleError", "PotentialDivergenceError",
    "QuadratureError", "TrailStopError",
    "ExpJumps", "LevyModel", "RootSet", "laplace_exponent", "solve_roots",
    "ExpPayoff", "PayoffBundle", "make_bundle", "potential",
    "ScaleFunction", "build_scale",
    "LevelOptimum", "Problem", "SolveResult", "StrategyCurve", "big_f", "discount_factor",
    "integral_value", "objective", "optimize_level", "solve_curve", "value_surface", "verify_qvi",
]
