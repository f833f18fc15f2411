"""Duplicate-free window, disk and convex-polygon range queries.

Window queries on class-partitioned indexes never produce duplicates: a tile
that the window starts after (in some dimension) skips the classes whose
rectangles also live in the previous tile, and per-dimension comparison modes
drop tests that the tile geometry already decides.

Disk and convex-polygon queries work on a *region plan*: the set ``S`` of
candidate tiles, stored as one contiguous column interval per row. Classes
pointing at a previous tile inside ``S`` are skipped, and the remaining
duplicates (a rectangle reaching ``S`` along a staircase-shaped border) are
removed with an exact canonical-tile test: a rectangle is reported only at
the first row of ``S`` it reaches, at the leftmost tile of that row.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from enum import IntEnum
from typing import Callable, Iterator

import numpy as np

from .geometry import (
    ConvexPolygon,
    Disk,
    Mbr,
    boxes_intersect,
    boxes_mindist2,
)
from .grid import ClassId, GridConfig, TileId, tiles_intersecting_mbr
from .index import GridIndex, Variant

_EMPTY_IDS = np.empty(0, dtype=np.int64)


class Mode(IntEnum):
    """Per-dimension comparison needed for entries of a tile.

    ``LOW`` tests ``r.lo <= W.hi``; ``HIGH`` tests ``r.hi >= W.lo``.
    """

    NONE = 0
    LOW = 1
    HIGH = 2
    BOTH = 3

    @property
    def comparisons(self) -> int:
        return (self & 1) + (self >> 1)


@dataclass
class QueryStats:
    comparisons: int = 0
    candidates: int = 0
    results: int = 0
    refinements_run: int = 0
    refinements_avoided: int = 0
    distance_computations: int = 0
    tiles: int = 0
    covered_tiles: int = 0

    def merge(self, other: QueryStats) -> QueryStats:
        for f in fields(self):
            setattr(self, f.name, getattr(self, f.name) + getattr(other, f.name))
        return self

    def as_dict(self) -> dict[str, int]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True, slots=True)
class TileTask:
    tile: TileId
    class_mask: tuple[ClassId, ...]
    x_mode: Mode
    y_mode: Mode

    @property
    def starts_before(self) -> tuple[bool, bool]:
        """Whether the window starts before this tile, per dimension."""
        return (ClassId.C not in self.class_mask, ClassId.B not in self.class_mask)


def _mask_for(drop_x: bool, drop_y: bool) -> tuple[ClassId, ...]:
    if drop_x and drop_y:
        return (ClassId.A,)
    if drop_x:
        return (ClassId.A, ClassId.B)
    if drop_y:
        return (ClassId.A, ClassId.C)
    return (ClassId.A, ClassId.B, ClassId.C, ClassId.D)


_CLASS_CODES = {
    (True, True): (0,),
    (True, False): (0, 1),
    (False, True): (0, 2),
    (False, False): (0, 1, 2, 3),
}


def _axis_plan(edges: list, i0: int, i1: int, wlo: float, whi: float) -> list[tuple[int, bool, int]]:
    """``(index, drop, mode)`` for every tile index of one axis in ``[i0, i1]``."""
    out = []
    for i in range(i0, i1 + 1):
        mode = 0
        if i == i0 and wlo > edges[i]:
            mode |= Mode.HIGH
        if i == i1 and whi < edges[i + 1]:
            mode |= Mode.LOW
        out.append((i, i > i0, mode))
    return out


def _window_axes(cfg: GridConfig, w: Mbr):
    rng = tiles_intersecting_mbr(cfg, w)
    if rng.empty:
        return None
    xs = _axis_plan(cfg._xe, rng.ix0, rng.ix1, w.xlo, w.xhi)
    ys = _axis_plan(cfg._ye, rng.iy0, rng.iy1, w.ylo, w.yhi)
    return xs, ys


def plan_window(idx: GridIndex | GridConfig, w: Mbr) -> list[TileTask]:
    """One task per tile meeting ``w``: classes to scan and comparisons per dimension."""
    cfg = idx if isinstance(idx, GridConfig) else idx.cfg
    axes = _window_axes(cfg, w)
    if axes is None:
        return []
    xs, ys = axes
    return [
        TileTask(TileId(ix, iy), _mask_for(dx, dy), Mode(mx), Mode(my))
        for iy, dy, my in ys
        for ix, dx, mx in xs
    ]


def _filter_table(cols: np.ndarray, mx: int, my: int, w: Mbr) -> np.ndarray:
    m = None
    if mx & 1:
        m = cols[0] <= w.xhi
    if mx & 2:
        t = cols[2] >= w.xlo
        m = t if m is None else m & t
    if my & 1:
        t = cols[1] <= w.yhi
        m = t if m is None else m & t
    if my & 2:
        t = cols[3] >= w.ylo
        m = t if m is None else m & t
    return m


_NCOMP = (0, 1, 1, 2)


def window_tile(
    idx: GridIndex, base: int, dx: bool, dy: bool, mx: int, my: int, w: Mbr, dec, out: list
) -> int:
    """Evaluate one window subtask at the tile whose class tables start at ``base``.

    Appends id arrays to ``out`` and returns the endpoint comparisons spent.
    """
    tables = idx.tables
    codes = _CLASS_CODES[(dx, dy)]
    nc = _NCOMP[mx] + _NCOMP[my]
    comps = 0
    if nc == 0:
        for c in codes:
            tb = tables[base + c]
            if tb.n:
                out.append(tb.ids)
    elif nc == 1 and dec is not None:
        # single endpoint test: binary search on the sorted decomposed column
        if mx:
            col, thr, low = (0, w.xhi, True) if mx == 1 else (2, w.xlo, False)
        else:
            col, thr, low = (1, w.yhi, True) if my == 1 else (3, w.ylo, False)
        for c in codes:
            d = dec[base + c]
            n = d.vals.shape[1]
            if not n:
                continue
            comps += n.bit_length()
            if low:
                pos = int(d.vals[col].searchsorted(thr, "right"))
                if pos:
                    out.append(d.ids[col, :pos])
            else:
                pos = int(d.vals[col].searchsorted(thr, "left"))
                if pos < n:
                    out.append(d.ids[col, pos:])
    else:
        for c in codes:
            tb = tables[base + c]
            if tb.n:
                comps += tb.n * nc
                out.append(tb.ids[_filter_table(tb.cols, mx, my, w)])
    return comps


def window_query(idx: GridIndex, w: Mbr, stats: QueryStats | None = None, use_decomposed: bool = True) -> np.ndarray:
    """Ids of all entries whose MBR meets ``w``, each emitted exactly once.

    The returned array is the raw concatenation of per-tile emissions; no set
    or deduplication structure is involved. One-level indexes are answered
    with the reference-point rule.
    """
    if idx.variant is Variant.ONE_LEVEL:
        return window_query_onelevel(idx, w, "reference-point", stats)
    axes = _window_axes(idx.cfg, w)
    if axes is None:
        return _EMPTY_IDS
    xs, ys = axes
    dec = idx.decomposed if use_decomposed else None
    nx = idx.cfg.nx
    out: list[np.ndarray] = []
    comps = 0
    tiles = 0
    for iy, dy, my in ys:
        row = iy * nx
        for ix, dx, mx in xs:
            tiles += 1
            comps += window_tile(idx, (row + ix) * 4, dx, dy, mx, my, w, dec, out)
    res = np.concatenate(out) if out else _EMPTY_IDS
    if stats is not None:
        stats.comparisons += comps
        stats.tiles += tiles
        stats.candidates += len(res)
        stats.results += len(res)
    return res


def onelevel_tile(idx: GridIndex, ix: int, iy: int, w: Mbr, out: list, seen: set | None = None) -> int:
    """Full-test window subtask at one tile, ignoring classes.

    Results go to the hash set ``seen`` when given, otherwise only pairs whose
    reference point (lower corner of ``MBR ∩ w``) lies in this tile are
    appended to ``out``. Returns the comparisons spent.
    """
    cfg = idx.cfg
    xe, ye = cfg._xe, cfg._ye
    nc = idx.nclasses
    base = (iy * cfg.nx + ix) * nc
    comps = 0
    for c in range(nc):
        tb = idx.tables[base + c]
        if not tb.n:
            continue
        cols = tb.cols
        comps += 4 * tb.n
        m = boxes_intersect(cols, w)
        if seen is not None:
            seen.update(tb.ids[m].tolist())
            continue
        sub = cols[:, m]
        k = sub.shape[1]
        if not k:
            continue
        refx = np.maximum(sub[0], w.xlo)
        refy = np.maximum(sub[1], w.ylo)
        comps += 2 * k
        ok = np.ones(k, dtype=bool)
        # clamped edge tiles own everything beyond the domain boundary
        if ix > 0:
            ok &= refx >= xe[ix]
            comps += k
        if ix < cfg.nx - 1:
            ok &= refx < xe[ix + 1]
            comps += k
        if iy > 0:
            ok &= refy >= ye[iy]
            comps += k
        if iy < cfg.ny - 1:
            ok &= refy < ye[iy + 1]
            comps += k
        out.append(tb.ids[m][ok])
    return comps


def window_query_onelevel(
    idx: GridIndex, w: Mbr, dedup: str = "reference-point", stats: QueryStats | None = None
) -> np.ndarray:
    """Baseline evaluation: full per-entry test in every tile, then deduplication.

    ``dedup="reference-point"`` reports a pair only at the tile holding the
    lower corner of ``MBR ∩ w``; ``dedup="hash"`` collects ids in a hash set.
    Works on any variant by treating each tile's classes as one list.
    """
    if dedup not in ("reference-point", "hash"):
        raise ValueError(f"unknown dedup mode {dedup!r}")
    cfg = idx.cfg
    rng = tiles_intersecting_mbr(cfg, w)
    if rng.empty:
        return _EMPTY_IDS
    out: list[np.ndarray] = []
    seen: set[int] | None = set() if dedup == "hash" else None
    comps = 0
    tiles = 0
    for iy in range(rng.iy0, rng.iy1 + 1):
        for ix in range(rng.ix0, rng.ix1 + 1):
            tiles += 1
            comps += onelevel_tile(idx, ix, iy, w, out, seen)
    if dedup == "hash":
        res = np.fromiter(seen, dtype=np.int64, count=len(seen))
    else:
        res = np.concatenate(out) if out else _EMPTY_IDS
    if stats is not None:
        stats.comparisons += comps
        stats.tiles += tiles
        stats.candidates += len(res)
        stats.results += len(res)
    return res


def iter_window_candidates(
    idx: GridIndex, w: Mbr, stats: QueryStats | None = None
) -> Iterator[tuple[tuple[bool, bool], np.ndarray, np.ndarray]]:
    """Filter-step output per class table as ``(starts_before, ids, cols)``.

    ``starts_before[i]`` is true when the window starts before the tile in
    dimension ``i``; every yielded rectangle then starts inside the tile in
    that dimension. One-level indexes yield ``(False, False)`` contexts.
    """
    if idx.variant is Variant.ONE_LEVEL:
        sub = QueryStats()
        ids = window_query_onelevel(idx, w, "reference-point", sub)
        sub.results = 0
        if stats is not None:
            stats.merge(sub)
        rows = np.fromiter((idx.store.row_of[i] for i in ids.tolist()), dtype=np.int64, count=len(ids))
        yield (False, False), ids, idx.store.cols[:, rows]
        return
    axes = _window_axes(idx.cfg, w)
    if axes is None:
        return
    xs, ys = axes
    nx = idx.cfg.nx
    for iy, dy, my in ys:
        for ix, dx, mx in xs:
            base = (iy * nx + ix) * 4
            nc = _NCOMP[mx] + _NCOMP[my]
            if stats is not None:
                stats.tiles += 1
            for c in _CLASS_CODES[(dx, dy)]:
                tb = idx.tables[base + c]
                if not tb.n:
                    continue
                if nc:
                    m = _filter_table(tb.cols, mx, my, w)
                    ids, cols = tb.ids[m], tb.cols[:, m]
                else:
                    ids, cols = tb.ids, tb.cols
                if stats is not None:
                    stats.comparisons += tb.n * nc
                    stats.candidates += len(ids)
                if len(ids):
                    yield (dx, dy), ids, cols


# --- region (disk / convex polygon) queries ---------------------------------


@dataclass(frozen=True, slots=True)
class RegionTask:
    tile: TileId
    class_mask: tuple[ClassId, ...]
    covered: bool
    overflow_check: bool
    """True when B/D entries must pass the canonical-row test (see module doc)."""


@dataclass
class RegionPlan:
    rows: dict[int, tuple[int, int]] = field(default_factory=dict)
    tasks: list[RegionTask] = field(default_factory=list)

    @property
    def first_row(self) -> int | None:
        return min(self.rows) if self.rows else None

    def __contains__(self, t) -> bool:
        span = self.rows.get(t[1])
        return span is not None and span[0] <= t[0] <= span[1]

    def tiles(self) -> list[TileId]:
        return [TileId(ix, iy) for iy, (a, b) in sorted(self.rows.items()) for ix in range(a, b + 1)]


def _finish_plan(rows: dict[int, tuple[int, int]], covered: Callable[[int, int], bool]) -> RegionPlan:
    plan = RegionPlan(rows=rows)
    if not rows:
        return plan
    first = min(rows)
    for iy in sorted(rows):
        a, b = rows[iy]
        above = rows.get(iy - 1)
        for ix in range(a, b + 1):
            drop_x = ix > a
            drop_y = above is not None and above[0] <= ix <= above[1]
            mask = _mask_for(drop_x, drop_y)
            plan.tasks.append(RegionTask(TileId(ix, iy), mask, covered(ix, iy), (not drop_y) and iy > first))
    return plan


def _tile_mindist2(cfg: GridConfig, ix: int, iy: int, qx: float, qy: float) -> float:
    x0, y0, x1, y1 = cfg.tile_bounds(ix, iy)
    dx = x0 - qx if qx < x0 else (qx - x1 if qx > x1 else 0.0)
    dy = y0 - qy if qy < y0 else (qy - y1 if qy > y1 else 0.0)
    return dx * dx + dy * dy


def _tile_maxdist2(cfg: GridConfig, ix: int, iy: int, qx: float, qy: float) -> float:
    x0, y0, x1, y1 = cfg.tile_bounds(ix, iy)
    dx = max(abs(qx - x0), abs(qx - x1))
    dy = max(abs(qy - y0), abs(qy - y1))
    return dx * dx + dy * dy


def plan_disk(idx: GridIndex | GridConfig, d: Disk, naive: bool = False) -> RegionPlan:
    """Candidate tiles of a disk query with their class masks and covered flags.

    By default each row is scanned inwards from both ends to find the first
    and last tile within the radius, and outwards from the centre's column to
    find covered tiles; ``naive=True`` tests every tile of ``MBR(d)`` instead.
    """
    cfg = idx if isinstance(idx, GridConfig) else idx.cfg
    rng = tiles_intersecting_mbr(cfg, d.mbr)
    if rng.empty:
        return RegionPlan()
    qx, qy = d.center
    r2 = d.radius * d.radius
    rows: dict[int, tuple[int, int]] = {}
    covered_rows: dict[int, tuple[int, int]] = {}
    for iy in range(rng.iy0, rng.iy1 + 1):
        if naive:
            hit = [ix for ix in range(rng.ix0, rng.ix1 + 1) if _tile_mindist2(cfg, ix, iy, qx, qy) <= r2]
            if not hit:
                continue
            if hit != list(range(hit[0], hit[-1] + 1)):
                raise AssertionError(f"non-contiguous disk row {iy}: {hit}")
            a, b = hit[0], hit[-1]
            cov = [ix for ix in range(a, b + 1) if _tile_maxdist2(cfg, ix, iy, qx, qy) <= r2]
            covered_rows[iy] = (cov[0], cov[-1]) if cov else (1, 0)
        else:
            a = rng.ix0
            while a <= rng.ix1 and _tile_mindist2(cfg, a, iy, qx, qy) > r2:
                a += 1
            if a > rng.ix1:
                continue
            b = rng.ix1
            while _tile_mindist2(cfg, b, iy, qx, qy) > r2:
                b -= 1
            c = min(max(cfg.locate_x(qx), a), b)
            if _tile_maxdist2(cfg, c, iy, qx, qy) <= r2:
                lo = hi = c
                while lo - 1 >= a and _tile_maxdist2(cfg, lo - 1, iy, qx, qy) <= r2:
                    lo -= 1
                while hi + 1 <= b and _tile_maxdist2(cfg, hi + 1, iy, qx, qy) <= r2:
                    hi += 1
                covered_rows[iy] = (lo, hi)
            else:
                covered_rows[iy] = (1, 0)
        rows[iy] = (a, b)

    def covered(ix: int, iy: int) -> bool:
        lo, hi = covered_rows[iy]
        return lo <= ix <= hi

    return _finish_plan(rows, covered)


def plan_convex(idx: GridIndex | GridConfig, poly: ConvexPolygon) -> RegionPlan:
    cfg = idx if isinstance(idx, GridConfig) else idx.cfg
    rng = tiles_intersecting_mbr(cfg, poly.mbr)
    if rng.empty:
        return RegionPlan()
    rows: dict[int, tuple[int, int]] = {}
    for iy in range(rng.iy0, rng.iy1 + 1):
        span = poly.x_range_in_strip(cfg._ye[iy], cfg._ye[iy + 1])
        if span is None:
            continue
        a, b = cfg.locate_x(span[0]), cfg.locate_x(span[1])
        a, b = max(a, rng.ix0), min(b, rng.ix1)
        if a <= b:
            rows[iy] = (a, b)

    def covered(ix: int, iy: int) -> bool:
        x0, y0, x1, y1 = cfg.tile_bounds(ix, iy)
        return bool(poly.contains_points(np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])).all())

    return _finish_plan(rows, covered)


def _canonical_conflict(cfg: GridConfig, plan: RegionPlan, iy: int, cols: np.ndarray) -> np.ndarray:
    """Entries that also reach an earlier row of the plan (reported there instead)."""
    ry0 = cfg.locate_y_array(cols[1])
    rx0 = cfg.locate_x_array(cols[0])
    rx1 = cfg.locate_x_array(cols[2])
    bad = np.zeros(cols.shape[1], dtype=bool)
    for y in range(int(ry0.min()), iy):
        span = plan.rows.get(y)
        if span is not None:
            bad |= (ry0 <= y) & (rx0 <= span[1]) & (rx1 >= span[0])
    return bad


def iter_region_candidates(
    idx: GridIndex,
    plan: RegionPlan,
    predicate: Callable[[np.ndarray], np.ndarray],
    stats: QueryStats | None = None,
) -> Iterator[tuple[RegionTask, np.ndarray, np.ndarray]]:
    """Run a region plan; yields ``(task, ids, cols)`` per tile with emissions."""
    if idx.variant is Variant.ONE_LEVEL:
        raise ValueError("region plans need a class-partitioned index; use the hash path for 1level")
    for task in plan.tasks:
        hit = region_tile(idx, plan, task, predicate, stats)
        if hit is not None:
            yield task, hit[0], hit[1]


def region_tile(
    idx: GridIndex,
    plan: RegionPlan,
    task: RegionTask,
    predicate: Callable[[np.ndarray], np.ndarray],
    stats: QueryStats | None = None,
) -> tuple[np.ndarray, np.ndarray] | None:
    """Evaluate one region subtask; ``(ids, cols)`` of its emissions or None."""
    ix, iy = task.tile
    base = (iy * idx.cfg.nx + ix) * 4
    if stats is not None:
        stats.tiles += 1
        stats.covered_tiles += task.covered
    ids_out, cols_out = [], []
    for c in task.class_mask:
        tb = idx.tables[base + c]
        if not tb.n:
            continue
        cols = tb.cols
        ids = tb.ids
        if not task.covered:
            m = predicate(cols)
            if stats is not None:
                stats.distance_computations += tb.n
            ids, cols = ids[m], cols[:, m]
        if task.overflow_check and (c & 1) and len(ids):
            keep = ~_canonical_conflict(idx.cfg, plan, iy, cols)
            ids, cols = ids[keep], cols[:, keep]
        if len(ids):
            ids_out.append(ids)
            cols_out.append(cols)
    if not ids_out:
        return None
    if len(ids_out) == 1:
        ids, cols = ids_out[0], cols_out[0]
    else:
        ids, cols = np.concatenate(ids_out), np.concatenate(cols_out, axis=1)
    if stats is not None:
        stats.candidates += len(ids)
    return ids, cols


def _disk_predicate(d: Disk) -> Callable[[np.ndarray], np.ndarray]:
    qx, qy = d.center
    r2 = d.radius * d.radius
    return lambda cols: boxes_mindist2(cols, qx, qy) <= r2


def disk_query(
    idx: GridIndex,
    d: Disk,
    stats: QueryStats | None = None,
    emissions: list | None = None,
    naive_plan: bool = False,
) -> np.ndarray:
    """Ids of all objects whose MBR is within ``d.radius`` of the centre, each once.

    Entries of covered tiles are reported without distance computations.
    Pass a list as ``emissions`` to receive ``(task, ids)`` for every tile.
    One-level indexes fall back to a shared hash set across tiles.
    """
    if idx.variant is Variant.ONE_LEVEL:
        return _disk_query_hash(idx, d, stats)
    plan = plan_disk(idx, d, naive=naive_plan)
    return _collect(iter_region_candidates(idx, plan, _disk_predicate(d), stats), stats, emissions)


def _collect(it, stats: QueryStats | None, emissions: list | None) -> np.ndarray:
    out = []
    for task, ids, _ in it:
        out.append(ids)
        if emissions is not None:
            emissions.append((task, ids))
    res = np.concatenate(out) if out else _EMPTY_IDS
    if stats is not None:
        stats.results += len(res)
    return res


def _disk_query_hash(idx: GridIndex, d: Disk, stats: QueryStats | None) -> np.ndarray:
    cfg = idx.cfg
    qx, qy = d.center
    r2 = d.radius * d.radius
    seen: set[int] = set()
    rng = tiles_intersecting_mbr(cfg, d.mbr)
    for t in rng:
        if _tile_mindist2(cfg, t[0], t[1], qx, qy) > r2:
            continue
        if stats is not None:
            stats.tiles += 1
        for tb in idx.tile_tables(t):
            if tb.n:
                m = boxes_mindist2(tb.cols, qx, qy) <= r2
                if stats is not None:
                    stats.distance_computations += tb.n
                seen.update(tb.ids[m].tolist())
    res = np.fromiter(seen, dtype=np.int64, count=len(seen))
    if stats is not None:
        stats.candidates += len(res)
        stats.results += len(res)
    return res


def convex_range_query(
    idx: GridIndex, poly: ConvexPolygon | np.ndarray, stats: QueryStats | None = None
) -> np.ndarray:
    """Ids whose MBR meets the convex polygon, each once; covered tiles skip tests."""
    if not isinstance(poly, ConvexPolygon):
        poly = ConvexPolygon(poly)
    if idx.variant is Variant.ONE_LEVEL:
        rng = tiles_intersecting_mbr(idx.cfg, poly.mbr)
        seen: set[int] = set()
        for t in rng:
            for tb in idx.tile_tables(t):
                if tb.n:
                    seen.update(tb.ids[poly.intersects_boxes(tb.cols)].tolist())
        return np.fromiter(seen, dtype=np.int64, count=len(seen))
    plan = plan_convex(idx, poly)
    return _collect(iter_region_candidates(idx, plan, poly.intersects_boxes, stats), stats, None)


def window_area_side(relative_extent: float) -> float:
    """Side of a square window covering ``relative_extent`` of the unit square."""
    return math.sqrt(relative_extent)
