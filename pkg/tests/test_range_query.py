import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tilegrid.geometry import ConvexPolygon, Disk, Mbr, Point, boxes_mindist2, maxdist2_point_mbr
from tilegrid.grid import ClassId, GridConfig, TileId, tile_extent
from tilegrid.index import GridIndex, ObjectRecord, build
from tilegrid.oracle import convex_oracle, disk_oracle, window_oracle
from tilegrid.range_query import (
    Mode,
    QueryStats,
    convex_range_query,
    disk_query,
    plan_disk,
    plan_window,
    window_query,
    window_query_onelevel,
)

from conftest import VARIANTS

A, B, C, D = ClassId.A, ClassId.B, ClassId.C, ClassId.D
ALL = (A, B, C, D)


def _random_windows(n, seed, side=0.05):
    rng = np.random.default_rng(seed)
    for lo in rng.random((n, 2)) * (1 - side):
        yield Mbr(lo[0], lo[1], lo[0] + side, lo[1] + side)


def _random_disks(n, seed, radius=0.04):
    rng = np.random.default_rng(seed)
    for c in rng.random((n, 2)):
        yield Disk(Point(*c), radius)


class TestPlanWindow:
    def test_figure_plan(self):
        # 10x10 grid; window spans columns 1..5 and rows 1..4, starting and ending inside tiles
        plan = {t.tile: t for t in plan_window(GridConfig(10, 10), Mbr(0.15, 0.15, 0.55, 0.45))}
        assert len(plan) == 20
        start = plan[TileId(1, 1)]
        assert start.class_mask == ALL and (start.x_mode, start.y_mode) == (Mode.HIGH, Mode.HIGH)
        for ix in range(2, 5):
            t = plan[TileId(ix, 1)]
            assert t.class_mask == (A, B) and (t.x_mode, t.y_mode) == (Mode.NONE, Mode.HIGH)
        last = plan[TileId(5, 1)]
        assert last.class_mask == (A, B) and (last.x_mode, last.y_mode) == (Mode.LOW, Mode.HIGH)
        for ix in range(2, 5):
            for iy in (2, 3):
                t = plan[TileId(ix, iy)]
                assert t.class_mask == (A,) and (t.x_mode, t.y_mode) == (Mode.NONE, Mode.NONE)
        assert plan[TileId(5, 2)].x_mode is Mode.LOW and plan[TileId(5, 2)].class_mask == (A,)
        corner = plan[TileId(1, 4)]
        assert corner.class_mask == (A, C) and (corner.x_mode, corner.y_mode) == (Mode.HIGH, Mode.LOW)

    def test_whole_domain(self):
        plan = plan_window(GridConfig(5, 5), Mbr(0, 0, 1, 1))
        assert len(plan) == 25
        for t in plan:
            assert (t.x_mode, t.y_mode) == (Mode.NONE, Mode.NONE)
            ix, iy = t.tile
            if ix and iy:
                assert t.class_mask == (A,)
        assert plan[0].class_mask == ALL

    def test_inside_one_tile(self):
        (t,) = plan_window(GridConfig(4, 4), Mbr(0.3, 0.3, 0.4, 0.4))
        assert t.class_mask == ALL and t.x_mode is Mode.BOTH and t.y_mode is Mode.BOTH

    def test_disjoint(self):
        assert plan_window(GridConfig(4, 4), Mbr(2, 2, 3, 3)) == []

    @given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 0.6), st.floats(0, 0.6))
    def test_masks_follow_window_start(self, x, y, wx, wy):
        cfg = GridConfig(8, 8)
        w = Mbr(x, y, min(1, x + wx), min(1, y + wy))
        for t in plan_window(cfg, w):
            e = tile_extent(cfg, t.tile)
            assert (C in t.class_mask) == (w.xlo >= e.xlo)
            assert (B in t.class_mask) == (w.ylo >= e.ylo)
            assert bool(t.x_mode & Mode.LOW) == (w.xhi < e.xhi)
            assert bool(t.x_mode & Mode.HIGH) == (w.xlo > e.xlo)


@pytest.mark.parametrize("variant", VARIANTS)
def test_window_oracle(variant, uniform10k, indexes10k):
    ids, cols = uniform10k
    idx = indexes10k[variant]
    for side in (0.01, 0.05, 0.2):
        for w in _random_windows(40, seed=int(side * 100), side=side):
            got = window_query(idx, w)
            assert np.array_equal(np.sort(got), window_oracle(ids, cols, w))


def test_window_clustered(clustered10k):
    ids, cols = clustered10k
    idx = GridIndex.from_arrays(GridConfig(40, 40), "2level+", ids, cols)
    for w in _random_windows(100, seed=3, side=0.03):
        assert np.array_equal(np.sort(window_query(idx, w)), window_oracle(ids, cols, w))


def test_no_duplicates_emitted(indexes10k):
    idx = indexes10k["2level"]
    for w in _random_windows(1000, seed=9, side=0.08):
        counts = Counter(window_query(idx, w).tolist())
        assert not counts or max(counts.values()) == 1


@pytest.mark.parametrize("dedup", ["reference-point", "hash"])
def test_onelevel_modes_agree(dedup, indexes10k):
    one = indexes10k["1level"]
    two = indexes10k["2level"]
    for w in _random_windows(100, seed=4, side=0.1):
        got = window_query_onelevel(one, w, dedup)
        assert len(got) == len(set(got.tolist()))
        assert np.array_equal(np.sort(got), np.sort(window_query(two, w)))


def test_onelevel_reference_point_example():
    # object spanning two tiles is reported at the tile holding the lower corner of the intersection
    idx = build(GridConfig(2, 1), "1level", [ObjectRecord(1, Mbr(0.3, 0.2, 0.7, 0.4))])
    assert window_query_onelevel(idx, Mbr(0.6, 0.0, 0.9, 1.0)).tolist() == [1]
    two = build(GridConfig(2, 1), "2level", [ObjectRecord(1, Mbr(0.3, 0.2, 0.7, 0.4))])
    assert window_query(two, Mbr(0.6, 0.0, 0.9, 1.0)).tolist() == [1]


def test_empty_index_queries():
    idx = build(GridConfig(4, 4), "2level", [])
    assert len(window_query(idx, Mbr(0, 0, 1, 1))) == 0
    assert len(disk_query(idx, Disk(Point(0.5, 0.5), 1.0))) == 0


def test_comparisons_two_level_not_above_one_level(indexes10k):
    for w in _random_windows(200, seed=5, side=0.07):
        s1, s2, s3 = QueryStats(), QueryStats(), QueryStats()
        window_query(indexes10k["1level"], w, s1)
        window_query(indexes10k["2level"], w, s2)
        window_query(indexes10k["2level+"], w, s3)
        assert s2.comparisons <= s1.comparisons
        assert s3.comparisons <= s2.comparisons


def test_decomposed_path_matches_class_tables(indexes10k):
    idx = indexes10k["2level+"]
    for w in _random_windows(200, seed=6, side=0.15):
        a = np.sort(window_query(idx, w, use_decomposed=True))
        b = np.sort(window_query(idx, w, use_decomposed=False))
        assert np.array_equal(a, b)


def test_degenerate_window():
    idx = build(GridConfig(4, 4), "2level", [ObjectRecord(1, Mbr(0.2, 0.2, 0.3, 0.3))])
    assert window_query(idx, Mbr(0.25, 0.25, 0.25, 0.25)).tolist() == [1]
    assert window_query(idx, Mbr(0.3, 0.3, 0.3, 0.3)).tolist() == [1]
    assert window_query(idx, Mbr(0.31, 0.3, 0.31, 0.3)).tolist() == []


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1), st.floats(0, 0.5), st.floats(0, 0.5)), min_size=1, max_size=40),
    st.tuples(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1)),
    st.integers(1, 7),
)
def test_window_property(boxes, wbox, n):
    cols = np.array([[x, y, min(1, x + a), min(1, y + b)] for x, y, a, b in boxes]).T
    ids = np.arange(len(boxes), dtype=np.int64)
    w = Mbr(min(wbox[0], wbox[2]), min(wbox[1], wbox[3]), max(wbox[0], wbox[2]), max(wbox[1], wbox[3]))
    expected = window_oracle(ids, cols, w)
    for v in VARIANTS:
        got = window_query(GridIndex.from_arrays(GridConfig(n, n + 1), v, ids, cols), w)
        assert np.array_equal(np.sort(got), expected)
        assert len(got) == len(expected)


class TestDisk:
    @pytest.mark.parametrize("variant", VARIANTS)
    @pytest.mark.parametrize("naive", [False, True])
    def test_oracle(self, variant, naive, uniform10k, indexes10k):
        ids, cols = uniform10k
        idx = indexes10k[variant]
        for r in (0.005, 0.04, 0.2):
            for d in _random_disks(30, seed=int(r * 1000), radius=r):
                got = disk_query(idx, d, naive_plan=naive)
                assert len(got) == len(set(got.tolist()))
                assert np.array_equal(np.sort(got), disk_oracle(ids, cols, d))

    def test_covered_tiles_sound(self, indexes10k):
        idx = indexes10k["2level"]
        covered_seen = 0
        for d in _random_disks(100, seed=12, radius=0.15):
            emissions = []
            disk_query(idx, d, emissions=emissions)
            for task, ids in emissions:
                if task.covered:
                    covered_seen += 1
                    rows = [idx.store.row_of[i] for i in ids.tolist()]
                    dist = boxes_mindist2(idx.store.cols[:, rows], *d.center)
                    assert np.all(dist <= d.radius**2)
        assert covered_seen > 0

    def test_plan_properties(self):
        cfg = GridConfig(12, 12)
        for d in _random_disks(50, seed=1, radius=0.2):
            plan = plan_disk(cfg, d)
            naive = plan_disk(cfg, d, naive=True)
            assert plan.tasks == naive.tasks
            for t in plan.tasks:
                e = tile_extent(cfg, t.tile)
                assert t.covered == (maxdist2_point_mbr(d.center, e) <= d.radius**2)
                assert (C in t.class_mask) == ((t.tile.ix - 1, t.tile.iy) not in plan)
                assert (B in t.class_mask) == ((t.tile.ix, t.tile.iy - 1) not in plan)

    def test_most_tiles_scan_class_a_only(self):
        plan = plan_disk(GridConfig(40, 40), Disk(Point(0.5, 0.5), 0.3))
        only_a = sum(t.class_mask == (A,) for t in plan.tasks)
        assert only_a > len(plan.tasks) / 2

    def test_zero_radius(self):
        recs = [ObjectRecord(1, Mbr(0.1, 0.1, 0.6, 0.6)), ObjectRecord(2, Mbr(0.4, 0.4, 0.9, 0.9)), ObjectRecord(3, Mbr(0.7, 0.1, 0.8, 0.2))]
        idx = build(GridConfig(4, 4), "2level", recs)
        assert sorted(disk_query(idx, Disk(Point(0.5, 0.5), 0.0)).tolist()) == [1, 2]

    @pytest.mark.parametrize("variant", VARIANTS)
    def test_whole_domain(self, variant, uniform10k, indexes10k):
        got = disk_query(indexes10k[variant], Disk(Point(0.5, 0.5), 1.0))
        assert len(got) == len(uniform10k[0]) == len(set(got.tolist()))

    def test_outside_domain(self, indexes10k):
        assert len(disk_query(indexes10k["2level"], Disk(Point(3, 3), 0.5))) == 0
        assert len(plan_disk(GridConfig(4, 4), Disk(Point(3, 3), 0.5)).tasks) == 0

    def test_staircase_border(self):
        # long thin rectangles crossing a disk boundary several rows apart
        ids, boxes = [], []
        for k in range(50):
            y = 0.02 * k
            boxes.append([0.05, y, 0.95, min(1, y + 0.3)])
            boxes.append([0.02 * k, 0.05, min(1, 0.02 * k + 0.3), 0.95])
        cols = np.array(boxes).T
        ids = np.arange(len(boxes), dtype=np.int64)
        idx = GridIndex.from_arrays(GridConfig(17, 17), "2level", ids, cols)
        for d in _random_disks(200, seed=21, radius=0.25):
            got = disk_query(idx, d)
            assert len(got) == len(set(got.tolist()))
            assert np.array_equal(np.sort(got), disk_oracle(ids, cols, d))


class TestConvex:
    def test_rectangle_equals_window(self, indexes10k):
        idx = indexes10k["2level"]
        for w in _random_windows(50, seed=8, side=0.13):
            poly = [(w.xlo, w.ylo), (w.xhi, w.ylo), (w.xhi, w.yhi), (w.xlo, w.yhi)]
            assert np.array_equal(np.sort(convex_range_query(idx, poly)), np.sort(window_query(idx, w)))

    @pytest.mark.parametrize("variant", VARIANTS)
    def test_triangles(self, variant, uniform10k, indexes10k):
        ids, cols = uniform10k
        rng = np.random.default_rng(17)
        for _ in range(60):
            c = rng.random(2)
            angles = np.sort(rng.random(3) * 2 * math.pi)
            pts = c + 0.2 * np.column_stack([np.cos(angles), np.sin(angles)])
            poly = ConvexPolygon(pts)
            got = convex_range_query(indexes10k[variant], poly)
            assert len(got) == len(set(got.tolist()))
            assert np.array_equal(np.sort(got), convex_oracle(ids, cols, poly))

    def test_non_convex_rejected(self, indexes10k):
        with pytest.raises(ValueError):
            convex_range_query(indexes10k["2level"], [(0, 0), (1, 0), (0.5, 0.2), (1, 1), (0, 1)])

    def test_outside_domain(self, indexes10k):
        assert len(convex_range_query(indexes10k["2level"], [(2, 2), (3, 2), (2.5, 3)])) == 0
