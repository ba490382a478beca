"""Anisotropic piecewise constant approximants and isotropic baselines.

:func:`build` refines the domain dyadically with ``gamma = 1/d`` and the
``alpha`` of :func:`alpha_of`, cuts every dyadic cube ``w`` into
``N_gamma(w)`` slabs orthogonal to the mean gradient on ``w`` and assigns
each slab the (sampled) mean of ``f``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .functions import FieldFunction
from .geometry import ConvexPartition, Cube, DyadicPartition, slab_split, uniform_partition
from .quadrature import (
    DEFAULT_CONFIG,
    QuadratureConfig,
    SlabGroup,
    average_gradients,
    cube_means,
    lp_error,
    slab_means,
)
from .refinement import RefinementParams, RefinementTrace, n_gamma, refine_to_budget

# below this norm the mean gradient is treated as zero and e_1 is used
ZERO_GRADIENT = 1e-10


def inv(p: float) -> float:
    """``1/p`` with ``1/inf = 0``."""
    return 0.0 if math.isinf(p) else 1.0 / p


def embedding_margin(d: int, p: float, q: float) -> float:
    return 2.0 / d + inv(p) - 1.0 / q


def is_admissible(d: int, p: float, q: float) -> bool:
    m = embedding_margin(d, p, q)
    return m > 0 if math.isinf(p) else m >= 0


def _check_dpq(d: int, p: float, q: float) -> None:
    if d < 1:
        raise ValueError("dimension must be >= 1")
    if not p >= 1:
        raise ValueError(f"p must lie in [1, inf], got {p}")
    if not 1 <= q < math.inf:
        raise ValueError(f"q must lie in [1, inf), got {q}")
    if not is_admissible(d, p, q):
        raise ValueError(
            f"W^2_{q} is not embedded in L_{p} for d={d} (2/d + 1/p - 1/q = {embedding_margin(d, p, q):.6g})"
        )


def alpha_of(d: int, p: float, q: float) -> float:
    """``q * (2/d + (1/p)(1 + 1/d) - 1/q)``.

    Raises
    ------
    ValueError
        If ``(d, p, q)`` violates the embedding condition.
    """
    _check_dpq(d, p, q)
    return q * (2.0 / d + inv(p) * (1.0 + 1.0 / d) - 1.0 / q)


class Regime(str, enum.Enum):
    OPTIMAL = "optimal"  # 2/(d+1) + 1/p - 1/q >= 0
    SUBOPTIMAL = "suboptimal"


@dataclass(frozen=True)
class ApproximationProblem:
    f: FieldFunction
    d: int
    p: float
    q: float
    N: int

    def __post_init__(self):
        if self.f.d != self.d:
            raise ValueError(f"function dimension {self.f.d} does not match d={self.d}")
        if self.N < 1:
            raise ValueError(f"cell budget must be >= 1, got {self.N}")
        _check_dpq(self.d, self.p, self.q)

    @property
    def regime(self) -> Regime:
        optimal = 2.0 / (self.d + 1) + inv(self.p) - 1.0 / self.q >= 0
        return Regime.OPTIMAL if optimal else Regime.SUBOPTIMAL

    @property
    def alpha(self) -> float:
        return alpha_of(self.d, self.p, self.q)


@dataclass(frozen=True)
class PiecewiseConstant:
    """Constants ``values[i]`` on the cells of ``partition``.

    ``trace`` and ``directions`` are diagnostics from the construction.
    """

    partition: ConvexPartition
    values: np.ndarray
    trace: RefinementTrace | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (len(self.partition),):
            raise ValueError("values must have one entry per cell")
        if not np.all(np.isfinite(values)):
            raise ValueError("piecewise constant values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n_cells(self) -> int:
        return len(self.partition)

    def __call__(self, x) -> np.ndarray:
        idx = self.partition.locate(x)
        if np.any(idx < 0):
            raise ValueError("point outside the domain")
        return self.values[idx]

    def dump(self, path) -> None:
        from .geometry import dump_partition

        dump_partition(self.partition, path, self.values)


def _assemble(
    f: FieldFunction,
    groups: list[SlabGroup],
    source: DyadicPartition,
    config: QuadratureConfig,
    trace: RefinementTrace | None = None,
) -> PiecewiseConstant:
    cells = []
    for g in groups:
        cells.extend(slab_split(g.cube, g.direction, g.count))
    _, means = slab_means(f, groups, config)
    return PiecewiseConstant(ConvexPartition(source.domain, tuple(cells), source), means, trace)


def slab_directions(f: FieldFunction, cubes, config: QuadratureConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Unit mean-gradient directions per cube; ``e_1`` where the mean gradient vanishes."""
    h = average_gradients(f, cubes, config)
    norms = np.linalg.norm(h, axis=1)
    e1 = np.zeros(f.d)
    e1[0] = 1.0
    u = np.where((norms >= ZERO_GRADIENT)[:, None], h / np.where(norms > 0, norms, 1.0)[:, None], e1)
    # renormalise so slab_split's unit check holds to rounding
    return u / np.linalg.norm(u, axis=1)[:, None]


def build(
    problem: ApproximationProblem,
    config: QuadratureConfig = DEFAULT_CONFIG,
    domain: Cube | None = None,
) -> PiecewiseConstant:
    """Anisotropic approximant ``s_N(f)`` with at most ``N`` cells."""
    domain = domain or Cube.unit(problem.d)
    gamma = 1.0 / problem.d
    params = RefinementParams(problem.alpha, gamma)
    part, trace = refine_to_budget(problem.f, domain, params, problem.q, problem.N, config)
    cubes = list(part.cells)
    dirs = slab_directions(problem.f, cubes, config)
    groups = [
        SlabGroup(c, tuple(u), n_gamma(c, domain, gamma)) for c, u in zip(cubes, dirs)
    ]
    return _assemble(problem.f, groups, part, config, trace)


class BaselineMode(str, enum.Enum):
    UNIFORM = "uniform"
    ADAPTIVE_DYADIC = "adaptive_dyadic"


def uniform_level(N: int, d: int) -> int:
    """Largest ``L`` with ``2**(d*L) <= N``."""
    if N < 1:
        raise ValueError("cell budget must be >= 1")
    level = 0
    while 2 ** (d * (level + 1)) <= N:
        level += 1
    return level


def build_isotropic_baseline(
    problem: ApproximationProblem,
    config: QuadratureConfig = DEFAULT_CONFIG,
    mode: BaselineMode | str = BaselineMode.UNIFORM,
    domain: Cube | None = None,
) -> PiecewiseConstant:
    """One constant per dyadic cube, either on the finest uniform grid within
    budget or on the adaptive dyadic partition with ``gamma = 0``."""
    mode = BaselineMode(mode)
    domain = domain or Cube.unit(problem.d)
    trace = None
    if mode is BaselineMode.UNIFORM:
        part = uniform_partition(domain, uniform_level(problem.N, problem.d))
    else:
        params = RefinementParams(problem.alpha, 0.0)
        part, trace = refine_to_budget(problem.f, domain, params, problem.q, problem.N, config)
    e1 = (1.0,) + (0.0,) * (problem.d - 1)
    groups = [SlabGroup(c, e1, 1) for c in part.cells]
    return _assemble(problem.f, groups, part, config, trace)


@dataclass(frozen=True)
class LinearSurrogate:
    """``l(x) = mean + <gradient, x - center>`` on one cube."""

    mean: float
    gradient: np.ndarray
    center: np.ndarray

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.mean + (x - self.center) @ self.gradient


def linear_surrogate(f: FieldFunction, cell: Cube, config: QuadratureConfig = DEFAULT_CONFIG) -> LinearSurrogate:
    """Mean value plus mean-gradient linear part of ``f`` on ``cell``."""
    mean = float(cube_means(f, [cell], config)[0])
    h = average_gradients(f, [cell], config)[0]
    return LinearSurrogate(mean, h, cell.center)


METHODS = ("algorithm1", "uniform", "adaptive_dyadic")


def approximate(
    problem: ApproximationProblem, method: str, config: QuadratureConfig = DEFAULT_CONFIG
) -> PiecewiseConstant:
    if method == "algorithm1":
        return build(problem, config)
    if method in ("uniform", "adaptive_dyadic"):
        return build_isotropic_baseline(problem, config, method)
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")


def error(problem: ApproximationProblem, s: PiecewiseConstant, config: QuadratureConfig = DEFAULT_CONFIG) -> float:
    """``||f - s||_{L_p}`` at the problem's ``p``."""
    return lp_error(problem.f, s, problem.p, config)
