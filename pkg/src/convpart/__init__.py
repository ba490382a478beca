"""Adaptive piecewise constant approximation on anisotropic convex partitions.

Dyadic cubes are refined greedily by a Sobolev-type energy and each cube
is cut into slabs orthogonal to the mean gradient of the target.
"""

from .analysis import RateStudy, fit_rate, lemma_constant, lower_bound_check, predicted_rate, run_study
from .approximant import (
    ApproximationProblem,
    PiecewiseConstant,
    alpha_of,
    approximate,
    build,
    build_isotropic_baseline,
    is_admissible,
)
from .functions import FieldFunction, corpus, get_function
from .geometry import ConvexPartition, Cube, DyadicPartition, SlabCell, slab_split
from .quadrature import DEFAULT_CONFIG, QuadratureConfig, energy_phi, lp_error
from .refinement import RefinementParams, refine_to_budget

__all__ = [
    "ApproximationProblem",
    "ConvexPartition",
    "Cube",
    "DEFAULT_CONFIG",
    "DyadicPartition",
    "FieldFunction",
    "PiecewiseConstant",
    "QuadratureConfig",
    "RateStudy",
    "RefinementParams",
    "SlabCell",
    "alpha_of",
    "approximate",
    "build",
    "build_isotropic_baseline",
    "corpus",
    "energy_phi",
    "fit_rate",
    "get_function",
    "is_admissible",
    "lemma_constant",
    "lower_bound_check",
    "lp_error",
    "predicted_rate",
    "refine_to_budget",
    "run_study",
    "slab_split",
]
