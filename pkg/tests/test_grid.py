import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tilegrid.geometry import Mbr, Point, mbr_intersects
from tilegrid.grid import (
    ClassId,
    GridConfig,
    TileId,
    class_of,
    prev_tile,
    tile_extent,
    tile_meets_mbr,
    tile_of_point,
    tiles_intersecting_mbr,
)

G4 = GridConfig(4, 4)
unit = st.floats(0, 1, allow_nan=False)


@st.composite
def unit_mbrs(draw):
    x0, x1 = sorted((draw(unit), draw(unit)))
    y0, y1 = sorted((draw(unit), draw(unit)))
    return Mbr(x0, y0, x1, y1)


def test_config_validation():
    with pytest.raises(ValueError):
        GridConfig(0, 4)
    with pytest.raises(ValueError):
        GridConfig(4, 4, Mbr(0, 0, 0, 1))


@pytest.mark.parametrize(
    "cfg, t, expected",
    [
        (G4, TileId(0, 0), Mbr(0, 0, 0.25, 0.25)),
        (G4, TileId(3, 3), Mbr(0.75, 0.75, 1.0, 1.0)),
        (GridConfig(2, 2, Mbr(0, 0, 2, 2)), TileId(1, 0), Mbr(1, 0, 2, 1)),
    ],
)
def test_tile_extent(cfg, t, expected):
    assert tile_extent(cfg, t) == expected


def test_tile_extent_out_of_bounds():
    with pytest.raises(IndexError):
        tile_extent(G4, TileId(4, 0))


@pytest.mark.parametrize(
    "p, expected",
    [((0.1, 0.1), TileId(0, 0)), ((0.25, 0.0), TileId(1, 0)), ((1.0, 1.0), TileId(3, 3))],
)
def test_tile_of_point(p, expected):
    assert tile_of_point(G4, Point(*p)) == expected


def test_tile_of_point_outside():
    with pytest.raises(ValueError):
        tile_of_point(G4, Point(1.2, 0.5))


@given(unit, unit)
def test_point_lies_in_its_tile(x, y):
    t = tile_of_point(G4, Point(x, y))
    e = tile_extent(G4, t)
    assert e.xlo <= x <= e.xhi and e.ylo <= y <= e.yhi


def test_tiles_intersecting_examples():
    r = tiles_intersecting_mbr(G4, Mbr(0.1, 0.1, 0.3, 0.3))
    assert (r.ix0, r.iy0, r.ix1, r.iy1) == (0, 0, 1, 1)
    assert len(tiles_intersecting_mbr(G4, Mbr(0, 0, 1, 1))) == 16
    assert tiles_intersecting_mbr(G4, Mbr(1.5, 1.5, 2, 2)).empty


def test_point_on_boundary_belongs_to_upper_tile():
    # half-open tiles: a rectangle touching a tile's upper edge is not stored there
    r = tiles_intersecting_mbr(G4, Mbr(0.25, 0.1, 0.25, 0.1))
    assert list(r) == [TileId(1, 0)]


def test_partially_outside_rectangle_is_clipped():
    r = tiles_intersecting_mbr(G4, Mbr(-0.5, 0.6, 0.1, 1.5))
    assert (r.ix0, r.iy0, r.ix1, r.iy1) == (0, 2, 0, 3)


@given(unit_mbrs())
def test_tile_range_matches_brute_force(r):
    got = set(tiles_intersecting_mbr(G4, r))
    brute = {TileId(ix, iy) for ix in range(4) for iy in range(4) if tile_meets_mbr(G4, TileId(ix, iy), r)}
    assert got == brute
    # every listed tile meets r under closed semantics too
    assert all(mbr_intersects(tile_extent(G4, t), r) for t in got)


def test_prev_tile():
    assert prev_tile(TileId(2, 3), 0) == TileId(1, 3)
    assert prev_tile(TileId(0, 3), 0) is None
    assert prev_tile(TileId(2, 0), 1) is None


def test_prev_tiles_abut():
    cfg = GridConfig(7, 5)
    for ix in range(1, 7):
        for iy in range(1, 5):
            t = TileId(ix, iy)
            assert tile_extent(cfg, prev_tile(t, 0)).xhi == tile_extent(cfg, t).xlo
            assert tile_extent(cfg, prev_tile(t, 1)).yhi == tile_extent(cfg, t).ylo


class TestClassOf:
    cfg = GridConfig(10, 10)
    tile = TileId(5, 2)  # [0.5, 0.6] x [0.2, 0.3]

    def test_starts_inside(self):
        assert class_of(Mbr(0.55, 0.25, 0.58, 0.28), self.tile, self.cfg) is ClassId.A

    def test_starts_before_in_y(self):
        c = class_of(Mbr(0.55, 0.15, 0.58, 0.28), self.tile, self.cfg)
        assert c is ClassId.B and c.bits == "01"

    def test_starts_before_in_both(self):
        c = class_of(Mbr(0.45, 0.15, 0.58, 0.28), self.tile, self.cfg)
        assert c is ClassId.D and c.bits == "11"

    def test_starts_exactly_at_tile_start_is_inside(self):
        t = tile_extent(self.cfg, self.tile)
        assert class_of(Mbr(t.xlo, t.ylo, t.xhi, t.yhi), self.tile, self.cfg) is ClassId.A

    def test_not_assigned(self):
        with pytest.raises(ValueError):
            class_of(Mbr(0.1, 0.1, 0.2, 0.2), self.tile, self.cfg)

    @given(unit_mbrs())
    def test_exactly_one_class_a_tile(self, r):
        tiles = list(tiles_intersecting_mbr(self.cfg, r))
        a_tiles = [t for t in tiles if class_of(r, t, self.cfg) is ClassId.A]
        assert a_tiles == [tile_of_point(self.cfg, r.lo)]

    @given(unit_mbrs())
    def test_bits_follow_start_position(self, r):
        for t in tiles_intersecting_mbr(self.cfg, r):
            e = tile_extent(self.cfg, t)
            c = class_of(r, t, self.cfg)
            assert c.x_bit == (r.xlo < e.xlo)
            assert c.y_bit == (r.ylo < e.ylo)


def test_edges_are_exact():
    cfg = GridConfig(3, 7, Mbr(-1.0, 2.0, 5.0, 9.0))
    assert cfg.x_edges[0] == -1.0 and cfg.x_edges[-1] == 5.0
    assert cfg.y_edges[-1] == 9.0
    assert np.all(np.diff(cfg.x_edges) > 0)
