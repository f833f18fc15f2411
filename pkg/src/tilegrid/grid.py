"""Uniform grid addressing: tile extents, point location, tile ranges and MBR classes.

Tiles are half-open ``[lo, hi)`` in each dimension, except that the last
row/column also owns the domain's upper boundary. An MBR is assigned to the
tiles ``tile_of_point(lo) .. tile_of_point(hi)``, so every object has exactly
one tile where it starts in both dimensions (its class-A tile).
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field
from enum import IntEnum
from typing import NamedTuple

import numpy as np

from .geometry import Mbr, Point


class TileId(NamedTuple):
    ix: int
    iy: int


class ClassId(IntEnum):
    """Per-tile class of an MBR; bit for dim i set iff the MBR starts before the tile in dim i.

    The integer value is ``2 * x_bit + y_bit`` so that ``format(c, '02b')``
    reads as the ``xy`` bit pair (B = 01 starts before in y only).
    """

    A = 0
    B = 1
    C = 2
    D = 3

    @property
    def x_bit(self) -> int:
        return self.value >> 1

    @property
    def y_bit(self) -> int:
        return self.value & 1

    def bit(self, dim: int) -> int:
        return self.x_bit if dim == 0 else self.y_bit

    @property
    def bits(self) -> str:
        return format(self.value, "02b")

    @classmethod
    def from_bits(cls, x_bit: int, y_bit: int) -> ClassId:
        return cls(2 * x_bit + y_bit)


ALL_CLASSES = (ClassId.A, ClassId.B, ClassId.C, ClassId.D)


@dataclass(frozen=True)
class GridConfig:
    nx: int
    ny: int
    domain: Mbr = Mbr(0.0, 0.0, 1.0, 1.0)
    x_edges: np.ndarray = field(init=False, repr=False, compare=False)
    y_edges: np.ndarray = field(init=False, repr=False, compare=False)
    _xe: list = field(init=False, repr=False, compare=False)
    _ye: list = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if int(self.nx) != self.nx or int(self.ny) != self.ny or self.nx < 1 or self.ny < 1:
            raise ValueError(f"grid dimensions must be positive integers, got {self.nx}x{self.ny}")
        d = self.domain
        if not (d.xhi > d.xlo and d.yhi > d.ylo):
            raise ValueError("domain must have positive extent in both dimensions")
        xe = _edges(d.xlo, d.xhi, self.nx)
        ye = _edges(d.ylo, d.yhi, self.ny)
        object.__setattr__(self, "x_edges", xe)
        object.__setattr__(self, "y_edges", ye)
        object.__setattr__(self, "_xe", xe.tolist())
        object.__setattr__(self, "_ye", ye.tolist())

    @classmethod
    def square(cls, n: int, domain: Mbr | None = None) -> GridConfig:
        return cls(n, n) if domain is None else cls(n, n, domain)

    @property
    def num_tiles(self) -> int:
        return self.nx * self.ny

    def linear(self, ix: int, iy: int) -> int:
        """Row-major linear tile number."""
        return iy * self.nx + ix

    def unlinear(self, t: int) -> TileId:
        iy, ix = divmod(t, self.nx)
        return TileId(ix, iy)

    def locate_x(self, x: float) -> int:
        """Column owning ``x``, clamped into the grid."""
        return _clamp(bisect_right(self._xe, x) - 1, self.nx)

    def locate_y(self, y: float) -> int:
        return _clamp(bisect_right(self._ye, y) - 1, self.ny)

    def locate_x_array(self, xs: np.ndarray) -> np.ndarray:
        return np.clip(np.searchsorted(self.x_edges, xs, side="right") - 1, 0, self.nx - 1)

    def locate_y_array(self, ys: np.ndarray) -> np.ndarray:
        return np.clip(np.searchsorted(self.y_edges, ys, side="right") - 1, 0, self.ny - 1)

    def tile_bounds(self, ix: int, iy: int) -> tuple[float, float, float, float]:
        xe, ye = self._xe, self._ye
        return xe[ix], ye[iy], xe[ix + 1], ye[iy + 1]


def _edges(lo: float, hi: float, n: int) -> np.ndarray:
    e = lo + (hi - lo) * (np.arange(n + 1, dtype=np.float64) / n)
    e[0] = lo
    e[-1] = hi
    return e


def _clamp(i: int, n: int) -> int:
    return 0 if i < 0 else (n - 1 if i >= n else i)


def _check_tile(cfg: GridConfig, t: TileId) -> None:
    if not (0 <= t[0] < cfg.nx and 0 <= t[1] < cfg.ny):
        raise IndexError(f"tile {tuple(t)} outside {cfg.nx}x{cfg.ny} grid")


def tile_extent(cfg: GridConfig, t: TileId) -> Mbr:
    _check_tile(cfg, t)
    return Mbr(*cfg.tile_bounds(t[0], t[1]))


def tile_of_point(cfg: GridConfig, p: Point) -> TileId:
    d = cfg.domain
    if not (d.xlo <= p[0] <= d.xhi and d.ylo <= p[1] <= d.yhi):
        raise ValueError(f"point {tuple(p)} outside domain")
    return TileId(cfg.locate_x(p[0]), cfg.locate_y(p[1]))


@dataclass(frozen=True, slots=True)
class TileRange:
    """Inclusive rectangular range of tiles; empty when ``ix0 > ix1``."""

    ix0: int
    iy0: int
    ix1: int
    iy1: int

    @property
    def empty(self) -> bool:
        return self.ix0 > self.ix1 or self.iy0 > self.iy1

    def __len__(self) -> int:
        if self.empty:
            return 0
        return (self.ix1 - self.ix0 + 1) * (self.iy1 - self.iy0 + 1)

    def __iter__(self):
        """Tiles in row-major order."""
        if self.empty:
            return
        for iy in range(self.iy0, self.iy1 + 1):
            for ix in range(self.ix0, self.ix1 + 1):
                yield TileId(ix, iy)

    def __contains__(self, t) -> bool:
        return self.ix0 <= t[0] <= self.ix1 and self.iy0 <= t[1] <= self.iy1


EMPTY_RANGE = TileRange(0, 0, -1, -1)


def tiles_intersecting_mbr(cfg: GridConfig, r: Mbr) -> TileRange:
    """Tiles whose half-open extent meets the closed rectangle ``r``.

    Parts of ``r`` outside the domain are clipped; a rectangle entirely
    outside yields the empty range.
    """
    d = cfg.domain
    if r.xhi < d.xlo or r.xlo > d.xhi or r.yhi < d.ylo or r.ylo > d.yhi:
        return EMPTY_RANGE
    return TileRange(cfg.locate_x(r.xlo), cfg.locate_y(r.ylo), cfg.locate_x(r.xhi), cfg.locate_y(r.yhi))


def tile_meets_mbr(cfg: GridConfig, t: TileId, r: Mbr) -> bool:
    """Half-open tile / closed rectangle intersection, for in-domain ``r``."""
    x0, y0, x1, y1 = cfg.tile_bounds(t[0], t[1])
    x_ok = r.xhi >= x0 and (r.xlo < x1 or (t[0] == cfg.nx - 1 and r.xlo <= x1))
    y_ok = r.yhi >= y0 and (r.ylo < y1 or (t[1] == cfg.ny - 1 and r.ylo <= y1))
    return x_ok and y_ok


def prev_tile(t: TileId, dim: int) -> TileId | None:
    if dim == 0:
        return TileId(t[0] - 1, t[1]) if t[0] > 0 else None
    return TileId(t[0], t[1] - 1) if t[1] > 0 else None


def class_of(r: Mbr, t: TileId, cfg: GridConfig) -> ClassId:
    rng = tiles_intersecting_mbr(cfg, r)
    if t not in rng:
        raise ValueError(f"MBR {r} is not assigned to tile {tuple(t)}")
    return ClassId.from_bits(int(t[0] > rng.ix0), int(t[1] > rng.iy0))
