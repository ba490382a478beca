"""Rate fitting, predicted orders, refinement-bound audits and the
lower-bound witness check."""

from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import mpmath
import numpy as np

from .approximant import (
    ApproximationProblem,
    PiecewiseConstant,
    _check_dpq,
    approximate,
    build,
    build_isotropic_baseline,
    inv,
)
from .functions import E_INV, FieldFunction, bump
from .quadrature import DEFAULT_CONFIG, QuadratureConfig, lp_error
from .refinement import Regime as LemmaRegime
from .refinement import RefinementTrace, TraceRow


def fit_rate(points: Sequence[tuple[float, float]]) -> tuple[float, float, float]:
    """Least-squares line through ``(ln N, ln error)``.

    Returns
    -------
    slope, intercept, r_squared
        ``r_squared`` is 1 when the errors are all equal (zero variance).

    Raises
    ------
    ValueError
        With fewer than 3 points, repeated ``N`` or a non-positive error.
    """
    pts = list(points)
    if len(pts) < 3:
        raise ValueError(f"rate fit needs at least 3 points, got {len(pts)}")
    N = np.array([p[0] for p in pts], dtype=float)
    err = np.array([p[1] for p in pts], dtype=float)
    if len(set(N.tolist())) != len(N):
        raise ValueError("rate fit needs distinct N values")
    if np.any(N <= 0) or np.any(~(err > 0)):
        raise ValueError("rate fit needs positive N and positive errors")
    x, y = np.log(N), np.log(err)
    xm, ym = x.mean(), y.mean()
    sxx = np.sum((x - xm) ** 2)
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = float(ym - slope * xm)
    ss_tot = float(np.sum((y - ym) ** 2))
    ss_res = float(np.sum((y - (intercept + slope * x)) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return slope, intercept, r2


class RateRegime(str, enum.Enum):
    THEOREM1 = "theorem1"
    THEOREM2 = "theorem2"


@dataclass(frozen=True)
class RatePrediction:
    rate: float
    regime: RateRegime
    beats_isotropic: bool  # 2/d + 1/p - 1/q > 1/d^2, i.e. o(N^{-1/d})


def theorem1_exponent(d: int) -> float:
    return 2.0 / (d + 1)


def theorem2_exponent(d: int, p: float, q: float) -> float:
    return d * (2.0 / d + inv(p) - 1.0 / q)


def predicted_rate(d: int, p: float, q: float) -> RatePrediction:
    """Guaranteed convergence order of the anisotropic approximant."""
    _check_dpq(d, p, q)
    margin = 2.0 / d + inv(p) - 1.0 / q
    improves = margin > 1.0 / d**2
    if 2.0 / (d + 1) + inv(p) - 1.0 / q >= 0:
        # the optimal order always beats N^{-1/d} for d >= 2
        return RatePrediction(theorem1_exponent(d), RateRegime.THEOREM1, improves)
    return RatePrediction(theorem2_exponent(d, p, q), RateRegime.THEOREM2, improves)


def lemma_constant(d: int, gamma: float, alpha: float, regime: LemmaRegime | str) -> float:
    """Closed-form constant of the refinement bound.

    ``lemma1`` (``0 <= gamma <= alpha``, ``alpha > 0``)::

        2^{d(alpha+1)(gamma+2)/(gamma+1)} (1 - 2^{-alpha d (gamma+1)/(alpha+1)})^{-(alpha+1)/(gamma+1)}

    ``lemma2`` (``0 < alpha < gamma``)::

        2^{d alpha (gamma+2)/gamma} (1 - 2^{-d gamma})^{-1}
    """
    regime = LemmaRegime(regime)
    with mpmath.workdps(40):
        d_, g, a = mpmath.mpf(d), mpmath.mpf(gamma), mpmath.mpf(alpha)
        if regime is LemmaRegime.LEMMA1:
            if not (0 <= gamma <= alpha and alpha > 0):
                raise ValueError(f"lemma1 constant needs 0 <= gamma <= alpha, alpha > 0 (gamma={gamma}, alpha={alpha})")
            head = mpmath.power(2, d_ * (a + 1) * (g + 2) / (g + 1))
            tail = mpmath.power(1 - mpmath.power(2, -a * d_ * (g + 1) / (a + 1)), -(a + 1) / (g + 1))
            return float(head * tail)
        if not 0 < alpha < gamma:
            raise ValueError(f"lemma2 constant needs 0 < alpha < gamma (gamma={gamma}, alpha={alpha})")
        head = mpmath.power(2, d_ * a * (g + 2) / g)
        return float(head / (1 - mpmath.power(2, -d_ * g)))


def bound_exponent(gamma: float, alpha: float, regime: LemmaRegime | str) -> float:
    """Exponent ``e`` in ``G_alpha <= C N_k^{-e} |Omega|^alpha Phi(Omega)``."""
    if LemmaRegime(regime) is LemmaRegime.LEMMA1:
        return (alpha + 1.0) / (gamma + 1.0)
    return alpha / gamma


@dataclass
class TraceAudit:
    """Per-generation audit of a refinement trace.

    ``bound_ratio[k]`` is ``G_k N_k^{e} / (|Omega|^alpha Phi(Omega))``
    divided by the lemma constant, for ``k >= 1``; ``decay_ratio[k]`` is
    ``G_k / (2^{-d alpha} G_{k-1})``.
    """

    regime: LemmaRegime
    constant: float
    bound_ratio: list[float] = field(default_factory=list)
    decay_ratio: list[float] = field(default_factory=list)
    bound_ok: bool = True
    decay_ok: bool = True

    @property
    def ok(self) -> bool:
        return self.bound_ok and self.decay_ok


def audit_rows(
    rows: Sequence[TraceRow],
    d: int,
    gamma: float,
    alpha: float,
    slack: float = 1.01,
    decay_tol: float = 1e-9,
    regime: LemmaRegime | str | None = None,
) -> TraceAudit:
    """Check the refinement bound and the per-generation decay of ``G_alpha``.

    ``|Omega|^alpha Phi(Omega)`` is read from the generation-0 row, where
    it equals ``G_alpha({Omega})``.
    """
    if regime is None:
        regime = LemmaRegime.LEMMA1 if gamma <= alpha else LemmaRegime.LEMMA2
    regime = LemmaRegime(regime)
    C = lemma_constant(d, gamma, alpha, regime)
    e = bound_exponent(gamma, alpha, regime)
    audit = TraceAudit(regime, C)
    if not rows:
        return audit
    scale = rows[0].G_alpha
    if scale == 0.0:
        return audit
    factor = 2.0 ** (-d * alpha)
    for prev, row in zip(rows, rows[1:]):
        ratio = row.G_alpha * row.N_k**e / scale / C
        audit.bound_ratio.append(ratio)
        audit.bound_ok &= ratio <= slack
        decay = row.G_alpha / (factor * prev.G_alpha) if prev.G_alpha > 0 else 0.0
        audit.decay_ratio.append(decay)
        audit.decay_ok &= decay <= 1.0 + decay_tol
    return audit


def audit_trace(trace: RefinementTrace, slack: float = 1.01, decay_tol: float = 1e-9) -> TraceAudit:
    return audit_rows(trace.rows, trace.d, trace.gamma, trace.alpha, slack, decay_tol)


# --------------------------------------------------------------------------
# Rate studies


@dataclass
class StudyRun:
    method: str
    N: int
    cells: int
    error: float
    seconds: float
    approximant: PiecewiseConstant | None = None


@dataclass
class RateStudy:
    label: str
    d: int
    p: float
    q: float
    budgets: list[int]
    runs: list[StudyRun] = field(default_factory=list)

    def methods(self) -> list[str]:
        return sorted({r.method for r in self.runs})

    def series(self, method: str) -> list[StudyRun]:
        return sorted((r for r in self.runs if r.method == method), key=lambda r: r.N)

    def errors(self, method: str) -> list[float]:
        return [r.error for r in self.series(method)]

    def fit(self, method: str) -> tuple[float, float, float] | None:
        """Slope, intercept and R^2 over budgets, skipping single-cell partitions.

        ``None`` when fewer than 3 usable points remain or an error is zero.
        """
        pts = [(r.N, r.error) for r in self.series(method) if r.cells > 1]
        if len(pts) < 3 or any(not e > 0 for _, e in pts):
            return None
        return fit_rate(pts)

    def traces(self) -> list[RefinementTrace]:
        return [r.approximant.trace for r in self.runs if r.approximant is not None and r.approximant.trace]


def run_one(
    f: FieldFunction, d: int, p: float, q: float, N: int, method: str, config: QuadratureConfig = DEFAULT_CONFIG
) -> StudyRun:
    problem = ApproximationProblem(f, d, p, q, N)
    t0 = time.perf_counter()
    s = approximate(problem, method, config)
    err = lp_error(f, s, p, config)
    return StudyRun(method, N, s.n_cells, err, time.perf_counter() - t0, s)


def run_study(
    f: FieldFunction,
    d: int,
    p: float,
    q: float,
    budgets: Sequence[int],
    methods: Sequence[str] = ("algorithm1", "uniform"),
    config: QuadratureConfig = DEFAULT_CONFIG,
    keep_approximants: bool = True,
) -> RateStudy:
    budgets = list(budgets)
    if not budgets or any(b < 1 for b in budgets) or any(a >= b for a, b in zip(budgets, budgets[1:])):
        raise ValueError("budgets must be non-empty, strictly increasing and >= 1")
    study = RateStudy(f.label, d, p, q, budgets)
    for method in methods:
        for N in budgets:
            run = run_one(f, d, p, q, N, method, config)
            if not keep_approximants:
                run.approximant = None
            study.runs.append(run)
    return study


# --------------------------------------------------------------------------
# Lower bound on the bump family


@dataclass(frozen=True)
class LowerBoundResult:
    m: int
    d: int
    N: int
    error_inf: float  # anisotropic partition
    error_uniform: float
    threshold: float  # ||f_m||_inf / 3
    passed: bool


LOWER_BOUND_FACTOR = 0.95


def lower_bound_check(
    m: int, d: int, config: QuadratureConfig = DEFAULT_CONFIG, q: float = 2.0
) -> LowerBoundResult:
    """Sup-norm error of ``f_m`` on partitions with ``m**d`` cells versus ``e^{-1}/3``.

    Any partition with at most ``m**d`` convex cells leaves an error above
    one third of ``||f_m||_inf``; the check uses the anisotropic and the
    uniform partition as witnesses.  ``q`` only enters the refinement
    energy.
    """
    if m < 1:
        raise ValueError("m must be a positive integer")
    f = bump(m, d)
    N = m**d
    problem = ApproximationProblem(f, d, math.inf, q, N)
    err_a = lp_error(f, build(problem, config), math.inf, config)
    err_u = lp_error(f, build_isotropic_baseline(problem, config, "uniform"), math.inf, config)
    threshold = E_INV / 3.0
    passed = min(err_a, err_u) >= LOWER_BOUND_FACTOR * threshold
    return LowerBoundResult(m, d, N, err_a, err_u, threshold, passed)
