from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from shapely.geometry import Polygon, box

from convpart.geometry import (
    ConvexPartition,
    Cube,
    DyadicPartition,
    SlabCell,
    clip_slab_2d,
    dump_partition,
    elementary_extension,
    load_partition,
    polygon_area,
    projection_range,
    slab_split,
    uniform_partition,
)
from convpart.quadrature import QuadratureConfig, SlabGroup, slab_means
from convpart.functions import constant

DIAG = (1 / math.sqrt(2), 1 / math.sqrt(2))


def test_cube_rejects_bad_side_and_corner():
    with pytest.raises(ValueError):
        Cube((0.0, 0.0), 0.0)
    with pytest.raises(ValueError):
        Cube((math.nan, 0.0), 1.0)
    with pytest.raises(ValueError):
        Cube((0.0,), 1.0, -1)


def test_cube_basic_properties():
    c = Cube((0.25, 0.5), 0.25, 2)
    assert c.volume == 0.0625
    np.testing.assert_allclose(c.center, [0.375, 0.625])
    assert c.vertices().shape == (4, 2)
    assert all(ch.side == 0.125 and ch.level == 3 for ch in c.children())
    assert c.is_inside(Cube.unit(2))


def test_half_open_membership():
    c = Cube((0.0, 0.0), 0.5)
    assert c.contains([0.0, 0.0])
    assert not c.contains([0.5, 0.25])


@pytest.mark.parametrize("d, expected", [(2, 4), (3, 8)])
def test_extension_of_singleton(d, expected):
    part = DyadicPartition.singleton(Cube.unit(d))
    new = elementary_extension(part, [part.domain])
    assert len(new) == expected
    assert new.generation == 1
    assert all(c.side == 0.5 for c in new.cells)


def test_extension_of_one_child_gives_seven():
    part = uniform_partition(Cube.unit(2), 1)
    new = elementary_extension(part, [part.cells[0]])
    assert len(new) == 7


def test_extension_errors():
    part = uniform_partition(Cube.unit(2), 1)
    with pytest.raises(ValueError):
        elementary_extension(part, [])
    with pytest.raises(ValueError):
        elementary_extension(part, [Cube.unit(2)])


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 3), st.lists(st.integers(0, 10_000), min_size=1, max_size=6))
def test_extension_count_and_volume_conservation(d, picks):
    part = DyadicPartition.singleton(Cube.unit(d))
    for pick in picks:
        cells = part.cells
        marked = {cells[pick % len(cells)], cells[(pick * 7) % len(cells)]}
        new = elementary_extension(part, marked)
        assert len(new) == len(part) + (2**d - 1) * len(marked)
        part = new
    assert math.isclose(part.total_volume, 1.0, rel_tol=1e-12)
    # every corner is a dyadic rational at the cube's level
    for c in part.cells:
        assert c.side == 2.0 ** -c.level
        assert all(float(x * 2**c.level).is_integer() for x in c.corner)


def test_projection_range_is_vertex_extreme():
    c = Cube((0.0, 0.0, 0.0), 2.0)
    u = np.array([0.6, -0.8, 0.0])
    a, b = projection_range(c, u)
    proj = (c.vertices() - np.asarray(c.corner)) @ u
    assert (a, b) == pytest.approx((proj.min(), proj.max()))


def test_slab_split_axis():
    slabs = slab_split(Cube.unit(2), (1.0, 0.0), 2)
    assert [(s.lo, s.hi) for s in slabs] == [(0.0, 0.5), (0.5, 1.0)]
    assert [polygon_area(clip_slab_2d(s)) for s in slabs] == pytest.approx([0.5, 0.5])


def test_slab_split_diagonal_two_halves():
    slabs = slab_split(Cube.unit(2), DIAG, 2)
    assert [polygon_area(clip_slab_2d(s)) for s in slabs] == pytest.approx([0.5, 0.5])


def test_slab_split_diagonal_four():
    slabs = slab_split(Cube.unit(2), DIAG, 4)
    areas = [polygon_area(clip_slab_2d(s)) for s in slabs]
    assert areas == pytest.approx([1 / 8, 3 / 8, 3 / 8, 1 / 8], abs=1e-14)


def test_slab_split_errors():
    with pytest.raises(ValueError):
        slab_split(Cube.unit(2), (1.0, 0.0), 0)
    with pytest.raises(ValueError):
        slab_split(Cube.unit(2), (0.0, 0.0), 2)
    with pytest.raises(ValueError):
        slab_split(Cube.unit(2), (1.0, 1.0), 2)


def test_single_slab_accepts_whole_cube(rng):
    u = rng.normal(size=3)
    u /= np.linalg.norm(u)
    (slab,) = slab_split(Cube.unit(3), u, 1)
    x = rng.uniform(0, 1, size=(500, 3))
    assert slab.contains(x).all()


def test_slabs_are_disjoint_and_exhaustive(rng):
    u = np.array([0.3, 0.4, math.sqrt(1 - 0.25)])
    slabs = slab_split(Cube.unit(3), u, 5)
    x = rng.uniform(0, 1, size=(2000, 3))
    hits = np.sum([s.contains(x) for s in slabs], axis=0)
    assert np.all(hits == 1)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.0, 2 * math.pi), st.integers(1, 9))
def test_sampled_volumes_tile_cell_and_match_clipping(theta, n):
    cube = Cube((0.25, 0.5), 0.25, 2)
    u = (math.cos(theta), math.sin(theta))
    slabs = slab_split(cube, u, n)
    cfg = QuadratureConfig(samples_per_cube=1 << 16)
    vols, _ = slab_means(constant(2), [SlabGroup(cube, slabs[0].direction, n)], cfg)
    assert math.isclose(vols.sum(), cube.volume, rel_tol=1e-12)
    exact = np.array([polygon_area(clip_slab_2d(s)) for s in slabs])
    assert math.isclose(exact.sum(), cube.volume, rel_tol=1e-12)
    # 0.5% relative on slabs large enough for the sample count to resolve
    big = exact > 0.05 * cube.volume
    np.testing.assert_allclose(vols[big], exact[big], rtol=5e-3)


def test_clip_examples():
    sq = Cube.unit(2)
    rect = clip_slab_2d(SlabCell(sq, (1.0, 0.0), 0.0, 0.5))
    assert polygon_area(rect) == pytest.approx(0.5)
    assert sorted(rect) == sorted([(0.0, 0.0), (0.5, 0.0), (0.5, 1.0), (0.0, 1.0)])
    tri = clip_slab_2d(SlabCell(sq, DIAG, 0.0, math.sqrt(2) / 4))
    assert len(tri) == 3 and polygon_area(tri) == pytest.approx(1 / 8)
    full = clip_slab_2d(SlabCell(sq, (1.0, 0.0), 0.0, 1.0))
    assert polygon_area(full) == pytest.approx(1.0)


def test_clip_counter_clockwise_and_degenerate():
    poly = clip_slab_2d(SlabCell(Cube.unit(2), DIAG, 0.2, 0.9))
    area2 = sum(x0 * y1 - x1 * y0 for (x0, y0), (x1, y1) in zip(poly, poly[1:] + poly[:1]))
    assert area2 > 0
    assert clip_slab_2d(SlabCell(Cube.unit(2), (1.0, 0.0), 1.5, 2.0)) == []


def test_clip_rejects_3d():
    with pytest.raises(NotImplementedError):
        clip_slab_2d(SlabCell(Cube.unit(3), (1.0, 0.0, 0.0), 0.0, 1.0))


@settings(max_examples=60, deadline=None)
@given(
    st.floats(0.0, 2 * math.pi),
    st.floats(-1.5, 1.5),
    st.floats(0.01, 1.5),
)
def test_clip_matches_shapely(theta, lo, width):
    u = np.array([math.cos(theta), math.sin(theta)])
    cube = Cube((0.0, 0.0), 1.0)
    slab = SlabCell(cube, tuple(u), lo, lo + width)
    ours = polygon_area(clip_slab_2d(slab))
    # independent oracle: intersect the square with a long rotated strip
    v = np.array([-u[1], u[0]])
    L = 10.0
    strip = Polygon([tuple(lo * u - L * v), tuple(lo * u + L * v), tuple((lo + width) * u + L * v), tuple((lo + width) * u - L * v)])
    ref = box(0, 0, 1, 1).intersection(strip).area
    assert ours == pytest.approx(ref, abs=1e-12)


def test_locate_agrees_with_membership(rng):
    part = uniform_partition(Cube.unit(2), 1)
    part = elementary_extension(part, [part.cells[3]])
    cells = []
    for i, c in enumerate(part.cells):
        th = 0.3 + i
        cells += slab_split(c, (math.cos(th), math.sin(th)), 1 + i % 3)
    cp = ConvexPartition(part.domain, tuple(cells), part)
    x = rng.uniform(0, 1, size=(3000, 2))
    idx = cp.locate(x)
    member = np.array([s.contains(x) for s in cells])
    assert np.all(member.sum(axis=0) == 1)
    np.testing.assert_array_equal(idx, member.argmax(axis=0))
    assert cp.locate([[1.5, 0.5]])[0] == -1


def test_dump_roundtrip(tmp_path):
    part = uniform_partition(Cube.unit(2), 1)
    cells = []
    for c in part.cells:
        cells += slab_split(c, DIAG, 3)
    cp = ConvexPartition(part.domain, tuple(cells), part)
    values = list(np.linspace(0, 1, len(cells)))
    path = tmp_path / "p.json"
    dump_partition(cp, path, values)
    back, vals = load_partition(path)
    assert vals == values
    assert len(back) == len(cp)
    for a, b in zip(back.cells, cp.cells):
        assert (a.parent, a.direction, a.lo, a.hi, a.index, a.count, a.closed) == (
            b.parent, b.direction, b.lo, b.hi, b.index, b.count, b.closed,
        )
