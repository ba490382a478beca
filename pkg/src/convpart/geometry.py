"""Cubes, dyadic subdivisions and slab cells.

A dyadic subdivision of a cube is grown by elementary extensions (every
marked cube is split into ``2**d`` halved children).  Each dyadic cube can
later be cut into slabs by equidistant hyperplanes orthogonal to a unit
direction; the slabs of all cubes form a convex partition of the domain.

Membership is half-open per axis (``[corner, corner + side)``) so that
shared faces are never counted twice.  Slabs are half-open in the
projection coordinate, except the last slab of a cube which is closed.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class Cube:
    """Axis-aligned cube ``corner + [0, side)^d`` at dyadic depth ``level``."""

    corner: tuple[float, ...]
    side: float
    level: int = 0

    def __post_init__(self):
        corner = tuple(float(c) for c in self.corner)
        object.__setattr__(self, "corner", corner)
        object.__setattr__(self, "side", float(self.side))
        if not self.side > 0 or not math.isfinite(self.side):
            raise ValueError(f"cube side must be positive and finite, got {self.side}")
        if not all(math.isfinite(c) for c in corner):
            raise ValueError("cube corner must be finite")
        if self.level < 0:
            raise ValueError("cube level must be non-negative")

    @classmethod
    def unit(cls, d: int) -> Cube:
        return cls((0.0,) * d, 1.0, 0)

    @property
    def dim(self) -> int:
        return len(self.corner)

    @property
    def volume(self) -> float:
        return self.side**self.dim

    @property
    def center(self) -> np.ndarray:
        return np.asarray(self.corner) + 0.5 * self.side

    @property
    def diameter(self) -> float:
        return self.side * math.sqrt(self.dim)

    def vertices(self) -> np.ndarray:
        """All ``2**d`` vertices, shape ``(2**d, d)``."""
        bits = np.array(list(itertools.product((0, 1), repeat=self.dim)), dtype=float)
        return np.asarray(self.corner) + self.side * bits

    def children(self) -> tuple[Cube, ...]:
        half = 0.5 * self.side
        return tuple(
            Cube(tuple(c + half * b for c, b in zip(self.corner, bits)), half, self.level + 1)
            for bits in itertools.product((0, 1), repeat=self.dim)
        )

    def contains(self, x: np.ndarray) -> np.ndarray:
        """Half-open membership test for points of shape ``(..., d)``."""
        x = np.asarray(x, dtype=float)
        lo = np.asarray(self.corner)
        return np.all((x >= lo) & (x < lo + self.side), axis=-1)

    def is_inside(self, other: Cube) -> bool:
        """True if this cube lies in ``other`` (closed containment)."""
        return all(
            o <= c and c + self.side <= o + other.side
            for c, o in zip(self.corner, other.corner)
        )


@dataclass(frozen=True)
class DyadicPartition:
    """A dyadic subdivision of ``domain`` reached after ``generation`` extensions."""

    domain: Cube
    cells: tuple[Cube, ...]
    generation: int = 0

    @classmethod
    def singleton(cls, domain: Cube) -> DyadicPartition:
        return cls(domain, (domain,), 0)

    def __len__(self) -> int:
        return len(self.cells)

    def __iter__(self):
        return iter(self.cells)

    @property
    def total_volume(self) -> float:
        return math.fsum(c.volume for c in self.cells)

    @property
    def max_level(self) -> int:
        return max(c.level for c in self.cells)


def elementary_extension(part: DyadicPartition, marked: Iterable[Cube]) -> DyadicPartition:
    """Split every marked cube of ``part`` into its ``2**d`` children.

    Unmarked cubes are carried over in their original order; children
    replace their parent in place.

    Raises
    ------
    ValueError
        If ``marked`` is empty or contains a cube not in ``part``.
    """
    marked = set(marked)
    if not marked:
        raise ValueError("elementary extension needs at least one marked cube")
    present = set(part.cells)
    missing = marked - present
    if missing:
        raise ValueError(f"{len(missing)} marked cube(s) are not cells of the partition")
    cells: list[Cube] = []
    for cube in part.cells:
        if cube in marked:
            cells.extend(cube.children())
        else:
            cells.append(cube)
    return DyadicPartition(part.domain, tuple(cells), part.generation + 1)


def uniform_partition(domain: Cube, level: int) -> DyadicPartition:
    """The uniform dyadic grid of ``2**(d*level)`` cubes."""
    part = DyadicPartition.singleton(domain)
    for _ in range(level):
        part = elementary_extension(part, part.cells)
    return part


def projection_range(cube: Cube, direction: np.ndarray) -> tuple[float, float]:
    """Min and max of ``<u, x - corner>`` over the cube's vertices."""
    u = np.asarray(direction, dtype=float)
    # the extreme vertices of a linear functional pick 0 or side per axis
    a = cube.side * float(np.minimum(u, 0.0).sum())
    b = cube.side * float(np.maximum(u, 0.0).sum())
    return a, b


@dataclass(frozen=True)
class SlabCell:
    """The part of ``parent`` with ``lo <= <u, x - corner> < hi``.

    ``closed`` marks the last slab of a cube, whose upper bound is
    inclusive.  ``index``/``count`` locate the slab among its siblings.
    """

    parent: Cube
    direction: tuple[float, ...]
    lo: float
    hi: float
    index: int = 0
    count: int = 1
    closed: bool = True

    def __post_init__(self):
        object.__setattr__(self, "direction", tuple(float(v) for v in self.direction))
        if not self.lo < self.hi:
            raise ValueError(f"slab thresholds must satisfy lo < hi, got [{self.lo}, {self.hi}]")

    @property
    def u(self) -> np.ndarray:
        return np.asarray(self.direction)

    def project(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - np.asarray(self.parent.corner)) @ self.u

    def contains(self, x: np.ndarray) -> np.ndarray:
        t = self.project(x)
        upper = (t <= self.hi) if self.closed else (t < self.hi)
        return self.parent.contains(x) & (t >= self.lo) & upper


def slab_split(cell: Cube, direction: Sequence[float], n: int) -> list[SlabCell]:
    """Cut ``cell`` into ``n`` slabs of equal thickness orthogonal to ``direction``.

    The projection range ``[a, b]`` of the cube onto the direction is
    divided into ``n`` equal sub-intervals.

    Raises
    ------
    ValueError
        If ``n < 1``, the direction is zero or it is not a unit vector.
    """
    if n < 1:
        raise ValueError(f"slab count must be >= 1, got {n}")
    u = np.asarray(direction, dtype=float)
    if u.shape != (cell.dim,):
        raise ValueError(f"direction must have length {cell.dim}")
    norm = float(np.linalg.norm(u))
    if norm == 0.0:
        raise ValueError("slab direction is the zero vector")
    if abs(norm - 1.0) > 1e-12:
        raise ValueError(f"slab direction must be a unit vector, |u| = {norm!r}")
    a, b = projection_range(cell, u)
    edges = a + (b - a) * np.arange(n + 1) / n
    edges[-1] = b
    return [
        SlabCell(cell, tuple(u), float(edges[i]), float(edges[i + 1]), i, n, closed=(i == n - 1))
        for i in range(n)
    ]


@dataclass(frozen=True)
class ConvexPartition:
    """Slab cells covering ``domain``, grouped by parent dyadic cube."""

    domain: Cube
    cells: tuple[SlabCell, ...]
    source: DyadicPartition | None = None

    def __len__(self) -> int:
        return len(self.cells)

    def groups(self) -> list[tuple[Cube, list[int]]]:
        """(parent, indices of its slabs) in order of first appearance."""
        order: dict[Cube, list[int]] = {}
        for i, slab in enumerate(self.cells):
            order.setdefault(slab.parent, []).append(i)
        return list(order.items())

    def locate(self, x: np.ndarray) -> np.ndarray:
        """Index of the cell containing each point, ``-1`` outside the domain."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.full(len(x), -1, dtype=np.int64)
        root = self.domain
        rel = (x - np.asarray(root.corner)) / root.side
        inside = np.all((rel >= 0) & (rel <= 1), axis=-1)
        groups = self.groups()
        by_key: dict[tuple, tuple[Cube, list[int]]] = {}
        levels = set()
        for parent, idx in groups:
            key_idx = tuple(
                int(round((c - o) / parent.side)) for c, o in zip(parent.corner, root.corner)
            )
            by_key[(parent.level, key_idx)] = (parent, idx)
            levels.add(parent.level)
        for level in sorted(levels):
            scale = 2**level
            ijk = np.clip(np.floor(rel * scale).astype(np.int64), 0, scale - 1)
            for p in np.flatnonzero(inside & (out < 0)):
                hit = by_key.get((level, tuple(int(v) for v in ijk[p])))
                if hit is None:
                    continue
                parent, idx = hit
                first = self.cells[idx[0]]
                a, b = projection_range(parent, first.u)
                n = len(idx)
                t = float((x[p] - np.asarray(parent.corner)) @ first.u)
                j = min(max(int(math.floor((t - a) / (b - a) * n)), 0), n - 1)
                out[p] = idx[j]
        return out

    def to_dict(self, values: Sequence[float] | None = None) -> dict:
        doc = {
            "domain": {"corner": list(self.domain.corner), "side": self.domain.side},
            "cells": [
                {
                    "parent_corner": list(s.parent.corner),
                    "parent_side": s.parent.side,
                    "direction": list(s.direction),
                    "lo": s.lo,
                    "hi": s.hi,
                }
                for s in self.cells
            ],
        }
        if values is not None:
            doc["values"] = [float(v) for v in values]
        return doc


def dump_partition(partition: ConvexPartition, path, values: Sequence[float] | None = None) -> None:
    """Write the partition (and optional per-cell values) as JSON."""
    doc = partition.to_dict(values)
    # json writes shortest round-trip floats (at most 17 significant digits)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_partition(path) -> tuple[ConvexPartition, list[float] | None]:
    """Read a partition dump written by :func:`dump_partition`.

    Slab indices are recovered from the order of cells sharing a parent.
    """
    with open(path) as fh:
        doc = json.load(fh)
    dom = doc["domain"]
    root = Cube(tuple(dom["corner"]), dom["side"], 0)
    raw = doc["cells"]
    counts: dict[tuple, int] = {}
    for c in raw:
        key = (tuple(c["parent_corner"]), c["parent_side"])
        counts[key] = counts.get(key, 0) + 1
    seen: dict[tuple, int] = {}
    cells = []
    for c in raw:
        key = (tuple(c["parent_corner"]), c["parent_side"])
        level = int(round(math.log2(root.side / c["parent_side"])))
        parent = Cube(tuple(c["parent_corner"]), c["parent_side"], level)
        i = seen.get(key, 0)
        seen[key] = i + 1
        n = counts[key]
        cells.append(SlabCell(parent, tuple(c["direction"]), c["lo"], c["hi"], i, n, closed=(i == n - 1)))
    return ConvexPartition(root, tuple(cells)), doc.get("values")


def clip_slab_2d(slab: SlabCell, tol: float = 1e-14) -> list[tuple[float, float]]:
    """Exact polygon of a 2-D slab, vertices counter-clockwise.

    The square is clipped against the half-planes ``<u, x - corner> >= lo``
    and ``<u, x - corner> <= hi``.  Returns ``[]`` when the result has zero
    area.

    Raises
    ------
    NotImplementedError
        If the slab's parent is not two-dimensional.
    """
    if slab.parent.dim != 2:
        raise NotImplementedError(f"exact clipping supports d=2 only, got d={slab.parent.dim}")
    x0, y0 = slab.parent.corner
    h = slab.parent.side
    poly = [(x0, y0), (x0 + h, y0), (x0 + h, y0 + h), (x0, y0 + h)]
    u = slab.u
    origin = np.array([x0, y0])

    def proj(p):
        return float((np.asarray(p) - origin) @ u)

    poly = _clip_halfplane(poly, lambda p: proj(p) - slab.lo)
    poly = _clip_halfplane(poly, lambda p: slab.hi - proj(p))
    # drop coincident consecutive vertices
    out: list[tuple[float, float]] = []
    scale = max(h, 1e-300)
    for p in poly:
        if not out or math.dist(p, out[-1]) > tol * scale:
            out.append(p)
    if len(out) > 1 and math.dist(out[0], out[-1]) <= tol * scale:
        out.pop()
    if len(out) < 3 or polygon_area(out) <= tol * h * h:
        return []
    if _signed_area(out) < 0:
        out.reverse()
    return out


def _clip_halfplane(poly, signed):
    """Sutherland-Hodgman step keeping points with ``signed(p) >= 0``."""
    if not poly:
        return []
    out = []
    prev = poly[-1]
    sp = signed(prev)
    for cur in poly:
        sc = signed(cur)
        if sc >= 0:
            if sp < 0:
                out.append(_intersect(prev, cur, sp, sc))
            out.append(tuple(cur))
        elif sp >= 0:
            out.append(_intersect(prev, cur, sp, sc))
        prev, sp = cur, sc
    return out


def _intersect(p, q, sp, sq):
    t = sp / (sp - sq)
    return (p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]))


def _signed_area(poly) -> float:
    s = 0.0
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        s += x1 * y2 - x2 * y1
    return 0.5 * s


def polygon_area(poly) -> float:
    return abs(_signed_area(poly))
