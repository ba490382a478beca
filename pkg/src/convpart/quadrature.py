"""Numerical integration on cubes and slabs.

Smooth integrands (Sobolev seminorms, average gradients) are integrated
with tensor-product Gauss-Legendre rules on each cube.  Integrands with
jumps across slab boundaries (cell means, ``L_p`` errors) use a scrambled
Sobol point set mapped into each cube with a per-cube Cranley-Patterson
shift; every sample is bucketed into exactly one slab by its projection
onto the slab direction.

Seminorms follow the sum convention

    |f|_{W^k_q(w)} = sum_{|k| = k} || D^k f ||_{L_q(w)},

where each mixed second derivative appears once (multi-indices, not
ordered pairs).
"""

from __future__ import annotations

import dataclasses
import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.stats import qmc

from .functions import FieldFunction
from .geometry import Cube, SlabCell, projection_range

# points per evaluation chunk; bounds peak memory of the batched kernels
CHUNK_POINTS = 1 << 20


@dataclass(frozen=True)
class QuadratureConfig:
    gl_points_per_axis: int = 8
    samples_per_cube: int = 1 << 14
    seed: int = 0xC0FFEE
    singular_exclusion_radius: float = 1e-6
    p_inf_sample_boost: int = 4

    def __post_init__(self):
        if self.gl_points_per_axis < 2:
            raise ValueError("gl_points_per_axis must be >= 2")
        if self.samples_per_cube < 256:
            raise ValueError("samples_per_cube must be >= 256")
        if self.singular_exclusion_radius < 0:
            raise ValueError("singular_exclusion_radius must be non-negative")
        if self.p_inf_sample_boost < 1:
            raise ValueError("p_inf_sample_boost must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> QuadratureConfig:
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - names
        if unknown:
            raise ValueError(f"unknown quadrature option(s): {sorted(unknown)}")
        return cls(**doc)


DEFAULT_CONFIG = QuadratureConfig()


# --------------------------------------------------------------------------
# Gauss-Legendre on cubes


@lru_cache(maxsize=32)
def gauss_legendre_unit(n: int, d: int) -> tuple[np.ndarray, np.ndarray]:
    """Tensor Gauss-Legendre rule on ``[0, 1]^d``: nodes ``(n**d, d)``, weights summing to 1."""
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    grids = np.meshgrid(*([x] * d), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=-1)
    wgrids = np.meshgrid(*([w] * d), indexing="ij")
    weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=-1)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def _cube_arrays(cubes: Sequence[Cube]) -> tuple[np.ndarray, np.ndarray]:
    corners = np.array([c.corner for c in cubes], dtype=float)
    sides = np.array([c.side for c in cubes], dtype=float)
    return corners, sides


def _keep_mask(f: FieldFunction, x: np.ndarray, radius: float) -> np.ndarray | None:
    """False for points inside an exclusion ball; ``None`` if nothing is excluded."""
    if not f.singular_points:
        return None
    keep = np.ones(x.shape[:-1], dtype=bool)
    for s in f.singular_points:
        dist2 = np.sum((x - np.asarray(s)) ** 2, axis=-1)
        keep &= dist2 > radius * radius
    return keep


def _chunks(total: int, per_item: int):
    step = max(1, CHUNK_POINTS // max(per_item, 1))
    for start in range(0, total, step):
        yield slice(start, min(total, start + step))


def _gl_chunk(f, cubes, sl, config):
    nodes, weights = gauss_legendre_unit(config.gl_points_per_axis, f.d)
    corners, sides = _cube_arrays(cubes[sl])
    x = corners[:, None, :] + sides[:, None, None] * nodes[None, :, :]
    w = weights[None, :] * (sides**f.d)[:, None]
    keep = _keep_mask(f, x, config.singular_exclusion_radius)
    if keep is not None:
        w = np.where(keep, w, 0.0)
    return x, w


def seminorms(
    f: FieldFunction,
    cubes: Sequence[Cube],
    q: float,
    orders: Sequence[int] = (1, 2),
    config: QuadratureConfig = DEFAULT_CONFIG,
) -> dict[int, np.ndarray]:
    """``|f|_{W^k_q}`` on every cube for each order ``k``; arrays of shape ``(len(cubes),)``."""
    if not 1 <= q < math.inf:
        raise ValueError(f"q must lie in [1, inf), got {q}")
    for k in orders:
        if k not in (0, 1, 2):
            raise ValueError(f"seminorm order {k} is not supported (only 0, 1, 2)")
    cubes = list(cubes)
    d = f.d
    iu = np.triu_indices(d)
    n_nodes = config.gl_points_per_axis**d
    out = {k: np.empty(len(cubes)) for k in orders}
    for sl in _chunks(len(cubes), n_nodes * d * d):
        x, w = _gl_chunk(f, cubes, sl, config)
        for k in orders:
            if k == 0:
                comps = f.eval(x)[..., None]
            elif k == 1:
                comps = f.grad(x)
            else:
                comps = f.hess(x)[..., iu[0], iu[1]]
            # comps: (cubes, nodes, multi-indices)
            integrals = np.einsum("cn,cnm->cm", w, np.abs(comps) ** q)
            out[k][sl] = np.sum(integrals ** (1.0 / q), axis=-1)
    return out


def seminorm_Wkq(
    f: FieldFunction, cell: Cube, k: int, q: float, config: QuadratureConfig = DEFAULT_CONFIG
) -> float:
    """Sum over multi-indices of order ``k`` of ``||D^k f||_{L_q(cell)}``.

    Raises
    ------
    ValueError
        If ``k`` is not 0, 1 or 2, or ``q`` is outside ``[1, inf)``.
    """
    return float(seminorms(f, [cell], q, (k,), config)[k][0])


@dataclass(frozen=True)
class EnergyFunctional:
    """``Phi(w) = sum_k |f|^q_{W^k_q(w)}`` over the given orders.

    With the default orders ``(1, 2)`` this is the refinement energy
    ``|f|^q_{W^1_q} + |f|^q_{W^2_q}``.
    """

    q: float
    orders: tuple[int, ...] = (1, 2)

    def __post_init__(self):
        if not 1 <= self.q < math.inf:
            raise ValueError(f"q must lie in [1, inf), got {self.q}")
        if not set(self.orders) <= {1, 2} or not self.orders:
            raise ValueError("energy orders must be a non-empty subset of {1, 2}")

    def batch(
        self, f: FieldFunction, cubes: Sequence[Cube], config: QuadratureConfig = DEFAULT_CONFIG
    ) -> np.ndarray:
        semi = seminorms(f, cubes, self.q, self.orders, config)
        return sum(semi[k] ** self.q for k in self.orders)

    def __call__(self, f: FieldFunction, cell: Cube, config: QuadratureConfig = DEFAULT_CONFIG) -> float:
        return float(self.batch(f, [cell], config)[0])


def energy_phi(f: FieldFunction, cell: Cube, q: float, config: QuadratureConfig = DEFAULT_CONFIG) -> float:
    """``|f|^q_{W^1_q(cell)} + |f|^q_{W^2_q(cell)}``."""
    return EnergyFunctional(q)(f, cell, config)


def energy_phi_batch(
    f: FieldFunction, cubes: Sequence[Cube], q: float, config: QuadratureConfig = DEFAULT_CONFIG
) -> np.ndarray:
    return EnergyFunctional(q).batch(f, cubes, config)


def average_gradients(
    f: FieldFunction, cubes: Sequence[Cube], config: QuadratureConfig = DEFAULT_CONFIG
) -> np.ndarray:
    """Mean of the gradient over each cube, shape ``(len(cubes), d)``."""
    cubes = list(cubes)
    out = np.empty((len(cubes), f.d))
    n_nodes = config.gl_points_per_axis**f.d
    for sl in _chunks(len(cubes), n_nodes * f.d):
        x, w = _gl_chunk(f, cubes, sl, config)
        g = f.grad(x)
        mass = w.sum(axis=1)
        out[sl] = np.einsum("cn,cnd->cd", w, g) / mass[:, None]
    return out


def average_gradient(f: FieldFunction, cell: Cube, config: QuadratureConfig = DEFAULT_CONFIG) -> np.ndarray:
    """``|cell|^{-1} * integral of grad f`` by Gauss-Legendre."""
    return average_gradients(f, [cell], config)[0]


def cube_means(f: FieldFunction, cubes: Sequence[Cube], config: QuadratureConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Gauss-Legendre mean of ``f`` over each cube."""
    cubes = list(cubes)
    out = np.empty(len(cubes))
    n_nodes = config.gl_points_per_axis**f.d
    for sl in _chunks(len(cubes), n_nodes):
        x, w = _gl_chunk(f, cubes, sl, config)
        out[sl] = np.einsum("cn,cn->c", w, f.eval(x)) / w.sum(axis=1)
    return out


# --------------------------------------------------------------------------
# Low-discrepancy sampling with slab bucketing


@lru_cache(maxsize=16)
def base_points(d: int, n: int, seed: int) -> np.ndarray:
    """Scrambled Sobol points in ``[0, 1)^d``, shared by all cubes."""
    sampler = qmc.Sobol(d, scramble=True, seed=np.random.default_rng(seed))
    m = int(math.log2(n))
    if 2**m == n:
        pts = sampler.random_base2(m)
    else:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            pts = sampler.random(n)
    pts.setflags(write=False)
    return pts


def cube_shift(cube: Cube, seed: int) -> np.ndarray:
    """Deterministic per-cube shift in ``[0, 1)^d`` derived from seed and geometry."""
    words = np.array(cube.corner + (cube.side,), dtype=np.float64).view(np.uint64)
    ss = np.random.SeedSequence([seed, *[int(v) for v in words]])
    return np.random.default_rng(ss).random(cube.dim)


def sample_cube(cube: Cube, n: int, seed: int) -> np.ndarray:
    """``n`` shifted low-discrepancy points inside ``cube``, shape ``(n, d)``."""
    unit = base_points(cube.dim, n, seed) + cube_shift(cube, seed)
    unit -= unit >= 1.0
    return np.asarray(cube.corner) + cube.side * unit


@dataclass(frozen=True)
class SlabGroup:
    """One dyadic cube cut into ``count`` slabs along ``direction``."""

    cube: Cube
    direction: tuple[float, ...]
    count: int

    @classmethod
    def from_slabs(cls, slabs: Sequence[SlabCell]) -> SlabGroup:
        first = slabs[0]
        if any(s.parent != first.parent for s in slabs):
            raise ValueError("all slabs must share one parent cube")
        if any(s.direction != first.direction for s in slabs):
            raise ValueError("all slabs of a cube must share one direction")
        return cls(first.parent, first.direction, len(slabs))


def _bucket(groups: Sequence[SlabGroup], unit: np.ndarray, sl: slice) -> np.ndarray:
    """Local slab index of every sample: ``(chunk, n)`` from unit-cube coordinates."""
    chunk = groups[sl]
    counts = np.array([g.count for g in chunk])
    if np.all(counts == 1):
        return np.zeros(unit.shape[:2], dtype=np.int64)
    U = np.array([g.direction for g in chunk])
    lo = np.minimum(U, 0.0).sum(axis=1)
    width = np.abs(U).sum(axis=1)
    t = np.einsum("cnd,cd->cn", unit, U)
    idx = np.floor((t - lo[:, None]) / width[:, None] * counts[:, None]).astype(np.int64)
    return np.clip(idx, 0, counts[:, None] - 1)


def _chunk_samples(f, groups, sl, n, seed):
    base = base_points(f.d, n, seed)
    shifts = np.array([cube_shift(g.cube, seed) for g in groups[sl]])
    unit = base[None, :, :] + shifts[:, None, :]
    # both terms lie in [0, 1), so one subtraction wraps into [0, 1)
    unit -= unit >= 1.0
    corners, sides = _cube_arrays([g.cube for g in groups[sl]])
    x = unit * sides[:, None, None]
    x += corners[:, None, :]
    return unit, x


def sampled_stats(
    f: FieldFunction, groups: Sequence[SlabGroup], config: QuadratureConfig = DEFAULT_CONFIG
) -> tuple[np.ndarray, np.ndarray]:
    """Sample counts and sums of ``f`` for all slabs, concatenated in group order."""
    groups = list(groups)
    n = config.samples_per_cube
    offsets = np.concatenate([[0], np.cumsum([g.count for g in groups])])
    total = int(offsets[-1])
    counts = np.zeros(total, dtype=np.int64)
    sums = np.zeros(total)
    for sl in _chunks(len(groups), n * f.d):
        unit, x = _chunk_samples(f, groups, sl, n, config.seed)
        gid = _bucket(groups, unit, sl) + offsets[sl.start : sl.stop, None]
        vals = f.eval(x)
        keep = _keep_mask(f, x, config.singular_exclusion_radius)
        if keep is not None:
            gid, vals = gid[keep], vals[keep]
        gid = gid.ravel()
        counts += np.bincount(gid, minlength=total)
        sums += np.bincount(gid, weights=vals.ravel(), minlength=total)
    return counts, sums


def _fallback_value(f: FieldFunction, group: SlabGroup, index: int) -> float:
    """``f`` at the cube point nearest the slab's mid-threshold along the direction."""
    cube = group.cube
    u = np.asarray(group.direction)
    a, b = projection_range(cube, u)
    mid = a + (b - a) * (index + 0.5) / group.count
    center = cube.center
    t_c = float((center - np.asarray(cube.corner)) @ u)
    x = center + (mid - t_c) * u
    x = np.clip(x, np.asarray(cube.corner), np.asarray(cube.corner) + cube.side)
    return float(f.eval(x[None, :])[0])


def slab_means(
    f: FieldFunction, groups: Sequence[SlabGroup], config: QuadratureConfig = DEFAULT_CONFIG
) -> tuple[np.ndarray, np.ndarray]:
    """Per-slab (volume estimate, mean estimate) for a list of slab groups."""
    groups = list(groups)
    counts, sums = sampled_stats(f, groups, config)
    volumes = np.empty(len(counts))
    means = np.empty(len(counts))
    empty = 0
    pos = 0
    for g in groups:
        sl = slice(pos, pos + g.count)
        volumes[sl] = counts[sl] * (g.cube.volume / config.samples_per_cube)
        with np.errstate(invalid="ignore", divide="ignore"):
            means[sl] = sums[sl] / counts[sl]
        for j in np.flatnonzero(counts[sl] == 0):
            means[pos + j] = _fallback_value(f, g, int(j))
            empty += 1
        pos += g.count
    if empty:
        warnings.warn(
            f"{empty} degenerate slab(s) received no samples; using the mid-threshold value of f",
            RuntimeWarning,
            stacklevel=2,
        )
    return volumes, means


@dataclass(frozen=True)
class SlabStats:
    volumes: np.ndarray
    means: np.ndarray
    counts: np.ndarray
    assignment: np.ndarray  # slab index of every sample, -1 if excluded


def cell_stats(f: FieldFunction, slabs: Sequence[SlabCell], config: QuadratureConfig = DEFAULT_CONFIG) -> SlabStats:
    """Sampled volume and mean of ``f`` for the slabs of one cube.

    ``samples_per_cube`` points are drawn in the parent cube and each is
    assigned to exactly one slab.  A slab with no samples triggers a
    ``RuntimeWarning`` and takes the value of ``f`` at the point of the
    cube closest to its mid-threshold.
    """
    group = SlabGroup.from_slabs(list(slabs))
    n = config.samples_per_cube
    unit, x = _chunk_samples(f, [group], slice(0, 1), n, config.seed)
    idx = _bucket([group], unit, slice(0, 1))[0]
    keep = _keep_mask(f, x[0], config.singular_exclusion_radius)
    if keep is not None:
        idx = np.where(keep, idx, -1)
    volumes, means = slab_means(f, [group], config)
    counts = np.bincount(idx[idx >= 0], minlength=group.count)
    return SlabStats(volumes, means, counts, idx)


def lp_error_groups(
    f: FieldFunction,
    groups: Sequence[SlabGroup],
    values: np.ndarray,
    p: float,
    config: QuadratureConfig = DEFAULT_CONFIG,
) -> float:
    """``||f - s||_{L_p}`` for slab-wise constants ``values`` (group order).

    For finite ``p`` each cube contributes ``|w|/n * sum |f - s|^p`` over
    its samples; for ``p = inf`` the maximum over a sample set enlarged by
    ``p_inf_sample_boost`` is returned (a lower estimate of the sup).
    """
    if not p >= 1:
        raise ValueError(f"p must be >= 1, got {p}")
    groups = list(groups)
    values = np.asarray(values, dtype=float)
    offsets = np.concatenate([[0], np.cumsum([g.count for g in groups])])
    if values.shape != (offsets[-1],):
        raise ValueError("values do not match the number of slabs")
    inf = math.isinf(p)
    n = config.samples_per_cube * (config.p_inf_sample_boost if inf else 1)
    parts: list[float] = []
    worst = 0.0
    for sl in _chunks(len(groups), n * f.d):
        unit, x = _chunk_samples(f, groups, sl, n, config.seed)
        gid = _bucket(groups, unit, sl) + offsets[sl.start : sl.stop, None]
        diff = np.abs(f.eval(x) - values[gid])
        keep = _keep_mask(f, x, config.singular_exclusion_radius)
        if keep is not None:
            diff = np.where(keep, diff, 0.0)
        if inf:
            worst = max(worst, float(diff.max(initial=0.0)))
        else:
            vol = np.array([g.cube.volume for g in groups[sl]]) / n
            parts.extend((vol * np.sum(diff**p, axis=1)).tolist())
    if inf:
        return worst
    return math.fsum(parts) ** (1.0 / p)


def partition_groups(partition) -> tuple[list[SlabGroup], np.ndarray]:
    """Slab groups of a convex partition and the cell order they imply."""
    groups = []
    order = []
    for parent, idx in partition.groups():
        slabs = [partition.cells[i] for i in idx]
        groups.append(SlabGroup.from_slabs(slabs))
        # slabs of a group must be listed by slab index for bucketing
        order.extend(i for _, i in sorted((partition.cells[i].index, i) for i in idx))
    return groups, np.asarray(order, dtype=np.int64)


def lp_error(f: FieldFunction, s, p: float, config: QuadratureConfig = DEFAULT_CONFIG) -> float:
    """``L_p`` distance between ``f`` and a piecewise constant ``s``.

    ``s`` needs ``partition`` (a :class:`~convpart.geometry.ConvexPartition`)
    and index-aligned ``values``.
    """
    groups, order = partition_groups(s.partition)
    values = np.asarray(s.values, dtype=float)[order]
    return lp_error_groups(f, groups, values, p, config)
