"""Greedy dyadic refinement driven by a subadditive cube energy.

Starting from the singleton partition ``{Omega}``, every generation splits
all cubes whose weighted energy ``g_alpha(w) = |w|^alpha * Phi(w)`` reaches
``2^{-d alpha}`` times the current maximum ``G_alpha``.  Each cube carries
``N_gamma(w) = floor((|Omega|/|w|)^gamma)`` degrees of freedom; the loop
stops at the last generation whose total ``N_k`` fits the budget.
"""

from __future__ import annotations

import csv
import enum
import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import mpmath
import numpy as np

from .functions import FieldFunction
from .geometry import Cube, DyadicPartition, elementary_extension
from .quadrature import DEFAULT_CONFIG, QuadratureConfig, energy_phi_batch


class Regime(str, enum.Enum):
    LEMMA1 = "lemma1"  # 0 <= gamma <= alpha, Phi subadditive
    LEMMA2 = "lemma2"  # 0 < alpha < gamma, Phi^(gamma/alpha) subadditive


@dataclass(frozen=True)
class RefinementParams:
    alpha: float
    gamma: float
    regime: Regime | None = None

    def __post_init__(self):
        if self.alpha < 0 or self.gamma < 0:
            raise ValueError("alpha and gamma must be non-negative")
        expected = Regime.LEMMA1 if self.gamma <= self.alpha else Regime.LEMMA2
        if expected is Regime.LEMMA2 and self.alpha <= 0:
            raise ValueError("alpha must be positive when alpha < gamma")
        regime = Regime(self.regime) if self.regime is not None else expected
        if regime is not expected:
            raise ValueError(
                f"regime {regime.value} inconsistent with alpha={self.alpha}, gamma={self.gamma}"
            )
        object.__setattr__(self, "regime", regime)


def n_gamma(cell: Cube, domain: Cube, gamma: float) -> int:
    """``floor((|Omega| / |w|)^gamma)`` from the cube's dyadic level."""
    return n_gamma_level(cell.level, domain.dim, gamma)


@functools.lru_cache(maxsize=4096)
def n_gamma_level(level: int, d: int, gamma: float) -> int:
    exponent = d * level * gamma
    nearest = round(exponent)
    if abs(exponent - nearest) <= 1e-12 * max(1.0, abs(exponent)):
        return 2 ** int(nearest)
    # doubles lose the fractional part above ~2^50, so floor in extended precision
    with mpmath.workdps(50):
        value = mpmath.power(2, mpmath.mpf(d * level) * mpmath.mpf(gamma))
        snapped = int(mpmath.nint(value))
        if abs(value - snapped) <= 1e-9:
            return snapped
        return int(mpmath.floor(value))


def g_alpha(cell: Cube, phi_value: float, alpha: float) -> float:
    """``|w|^alpha * Phi(w)``."""
    if phi_value < 0:
        raise ValueError("energy must be non-negative")
    return cell.volume**alpha * phi_value


@dataclass(frozen=True)
class TraceRow:
    k: int
    G_alpha: float
    N_k: int
    marked: int
    t_k: int
    cells: int


@dataclass
class RefinementTrace:
    """Statistics of every generation, including the first one over budget.

    ``accepted`` is the index of the generation returned to the caller;
    rows after it were computed only to certify the stopping rule.
    """

    d: int
    alpha: float
    gamma: float
    domain_volume: float
    phi_domain: float
    rows: list[TraceRow] = field(default_factory=list)
    accepted: int = 0

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def regime(self) -> Regime:
        return RefinementParams(self.alpha, self.gamma).regime

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            write_trace_rows(fh, self.rows)


TRACE_COLUMNS = ("k", "G_alpha", "N_k", "marked", "t_k", "cells")


def write_trace_rows(fh, rows: Sequence[TraceRow]) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(TRACE_COLUMNS)
    for r in rows:
        writer.writerow([r.k, repr(float(r.G_alpha)), r.N_k, r.marked, r.t_k, r.cells])


def read_trace_csv(path) -> list[TraceRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(TRACE_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"trace CSV lacks column(s) {sorted(missing)}")
        return [
            TraceRow(int(r["k"]), float(r["G_alpha"]), int(r["N_k"]), int(r["marked"]), int(r["t_k"]), int(r["cells"]))
            for r in reader
        ]


EnergyBatch = Callable[[Sequence[Cube]], np.ndarray]


def mark_cells(cells: Sequence[Cube], g: np.ndarray, alpha: float, d: int) -> list[Cube]:
    """Cubes with ``g >= 2^{-d alpha} * max g`` (inclusive, ties all marked)."""
    threshold = 2.0 ** (-d * alpha) * float(np.max(g))
    return [c for c, gv in zip(cells, g) if gv >= threshold]


def refine_with_energy(
    energy: EnergyBatch,
    domain: Cube,
    params: RefinementParams,
    N: int,
) -> tuple[DyadicPartition, RefinementTrace, dict[Cube, float]]:
    """Run the refinement loop with an arbitrary cube energy.

    Returns the last partition with ``N_k <= N``, the trace, and the energy
    of every cube created on the way (each evaluated exactly once).
    """
    if N < 1:
        raise ValueError(f"cell budget must be >= 1, got {N}")
    d = domain.dim
    alpha, gamma = params.alpha, params.gamma
    phi: dict[Cube, float] = {domain: float(energy([domain])[0])}
    phi_omega = phi[domain]
    if phi_omega < 0 or not math.isfinite(phi_omega):
        raise ValueError(f"energy of the domain must be finite and >= 0, got {phi_omega}")
    trace = RefinementTrace(d, alpha, gamma, domain.volume, phi_omega)
    part = DyadicPartition.singleton(domain)
    G = g_alpha(domain, phi_omega, alpha)
    trace.rows.append(TraceRow(0, G, 1, 0, 0, 1))
    if phi_omega == 0.0:
        return part, trace, phi

    accepted = part
    while True:
        cells = part.cells
        g = np.array([g_alpha(c, phi[c], alpha) for c in cells])
        marked = mark_cells(cells, g, alpha, d)
        t_k = sum(n_gamma(c, domain, gamma) for c in marked)
        new = elementary_extension(part, marked)
        fresh = [c for c in new.cells if c not in phi]
        if fresh:
            for c, v in zip(fresh, energy(fresh)):
                phi[c] = float(v)
        G_new = max(g_alpha(c, phi[c], alpha) for c in new.cells)
        N_new = sum(n_gamma(c, domain, gamma) for c in new.cells)
        trace.rows.append(TraceRow(new.generation, G_new, N_new, len(marked), t_k, len(new)))
        if N_new > N:
            break
        accepted = new
        trace.accepted = new.generation
        part = new
    return accepted, trace, phi


def refine_to_budget(
    f: FieldFunction,
    domain: Cube,
    params: RefinementParams,
    q: float,
    N: int,
    config: QuadratureConfig = DEFAULT_CONFIG,
) -> tuple[DyadicPartition, RefinementTrace]:
    """Refine ``domain`` for ``f`` with ``Phi = |f|^q_{W^1_q} + |f|^q_{W^2_q}``.

    Parameters
    ----------
    f : FieldFunction
        Function whose energy drives the refinement.
    domain : Cube
        The cube ``Omega``.
    params : RefinementParams
        ``alpha`` and ``gamma`` of the marking rule and the counter.
    q : float
        Integrability exponent of the energy.
    N : int
        Budget; the returned partition satisfies ``N_m <= N < N_{m+1}``.

    Returns
    -------
    partition : DyadicPartition
    trace : RefinementTrace
        All generations up to and including the rejected ``m + 1``.  When
        ``Phi(Omega) = 0`` the singleton partition and a one-row trace are
        returned.
    """
    part, trace, _ = refine_with_energy(
        lambda cubes: energy_phi_batch(f, cubes, q, config), domain, params, N
    )
    return part, trace


def replay_G(
    f: FieldFunction, part: DyadicPartition, alpha: float, q: float, config: QuadratureConfig = DEFAULT_CONFIG
) -> float:
    """``G_alpha`` recomputed from scratch on a partition."""
    phi = energy_phi_batch(f, part.cells, q, config)
    return max(g_alpha(c, float(v), alpha) for c, v in zip(part.cells, phi))
