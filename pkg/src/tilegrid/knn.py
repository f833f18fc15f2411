"""k-nearest-neighbour filter step over the grid.

Cells are visited best-first by their minimum distance to ``q``, starting at
the cell containing ``q`` and expanding to edge neighbours, until the visited
non-empty cells (the *core*) hold at least ``k`` distinct objects. Every
object stored in a core cell lies within the largest core-cell maximum
distance ``d`` of ``q``, so the k nearest objects are found among the cells
within ``d`` (the *candidates*).
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .geometry import Disk, Point, boxes_mindist2
from .grid import TileId, tiles_intersecting_mbr
from .index import GridIndex, Variant
from .range_query import QueryStats, disk_query


@dataclass(frozen=True)
class KnnPlan:
    core_cells: frozenset[TileId]
    bound_d: float
    candidate_cells: frozenset[TileId]
    bound_d2: float


def _cell_dists2(idx: GridIndex, ix: int, iy: int, qx: float, qy: float) -> tuple[float, float]:
    x0, y0, x1, y1 = idx.cfg.tile_bounds(ix, iy)
    dx = max(x0 - qx, 0.0, qx - x1)
    dy = max(y0 - qy, 0.0, qy - y1)
    fx = max(abs(qx - x0), abs(qx - x1))
    fy = max(abs(qy - y0), abs(qy - y1))
    return dx * dx + dy * dy, fx * fx + fy * fy


def knn_plan(idx: GridIndex, q: Point, k: int, class_a_only: bool = False) -> KnnPlan:
    """Core cells, distance bound and candidate cells for a kNN query.

    By default expansion stops once the core holds ``k`` distinct ids, which
    copes with objects replicated across cells. With ``class_a_only`` only
    class-A entries are counted; each object has exactly one, so the count
    is duplicate-free without looking at ids.
    """
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    if idx.num_objects < k:
        raise ValueError(f"k={k} exceeds the {idx.num_objects} indexed objects")
    if class_a_only and idx.variant is Variant.ONE_LEVEL:
        raise ValueError("class-A counting needs a class-partitioned index")
    cfg = idx.cfg
    qx, qy = float(q[0]), float(q[1])
    counts = idx.class_a_counts if class_a_only else idx.cell_counts
    start = (cfg.locate_x(qx), cfg.locate_y(qy))
    heap = [(_cell_dists2(idx, *start, qx, qy)[0], start[1] * cfg.nx + start[0])]
    seen = {heap[0][1]}
    core: list[TileId] = []
    total = 0
    distinct: set[int] = set()
    bound2 = 0.0
    while heap:
        _, lin = heapq.heappop(heap)
        iy, ix = divmod(lin, cfg.nx)
        if counts[lin]:
            core.append(TileId(ix, iy))
            bound2 = max(bound2, _cell_dists2(idx, ix, iy, qx, qy)[1])
            total += int(counts[lin])
            if class_a_only:
                done = total >= k
            else:
                for tb in idx.tile_tables((ix, iy)):
                    distinct.update(tb.ids.tolist())
                done = len(distinct) >= k
            if done:
                break
        for jx, jy in ((ix - 1, iy), (ix + 1, iy), (ix, iy - 1), (ix, iy + 1)):
            if 0 <= jx < cfg.nx and 0 <= jy < cfg.ny:
                j = jy * cfg.nx + jx
                if j not in seen:
                    seen.add(j)
                    heapq.heappush(heap, (_cell_dists2(idx, jx, jy, qx, qy)[0], j))
    bound = math.sqrt(bound2)
    cand = []
    rng = tiles_intersecting_mbr(cfg, Disk(Point(qx, qy), bound).mbr)
    for t in rng:
        if idx.cell_counts[cfg.linear(*t)] and _cell_dists2(idx, t.ix, t.iy, qx, qy)[0] <= bound2:
            cand.append(t)
    return KnnPlan(frozenset(core), bound, frozenset(cand), bound2)


def knn_query_with_distances(
    idx: GridIndex, q: Point, k: int, class_a_only: bool = False, stats: QueryStats | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """The k nearest ids by MBR mindist (ties by smaller id) and their squared distances."""
    plan = knn_plan(idx, q, k, class_a_only)
    qx, qy = float(q[0]), float(q[1])
    if class_a_only:
        # duplicate-free gathering: a disk query over the bound, nudged outwards
        # so that rounding in sqrt cannot exclude objects exactly at the bound
        r = math.nextafter(plan.bound_d, math.inf)
        sub = QueryStats()
        ids = disk_query(idx, Disk(Point(qx, qy), r), sub)
        rows = np.fromiter((idx.store.row_of[i] for i in ids.tolist()), dtype=np.int64, count=len(ids))
        d2 = boxes_mindist2(idx.store.cols[:, rows], qx, qy)
        if stats is not None:
            stats.distance_computations += sub.distance_computations + len(ids)
            stats.tiles += sub.tiles
    else:
        id_parts, col_parts = [], []
        for t in sorted(plan.candidate_cells):
            for tb in idx.tile_tables(t):
                if tb.n:
                    id_parts.append(tb.ids)
                    col_parts.append(tb.cols)
        ids = np.concatenate(id_parts)
        d2 = boxes_mindist2(np.concatenate(col_parts, axis=1), qx, qy)
        if stats is not None:
            stats.distance_computations += len(ids)
            stats.tiles += len(plan.candidate_cells)
        ids, first = np.unique(ids, return_index=True)
        d2 = d2[first]
    order = np.lexsort((ids, d2))[:k]
    if stats is not None:
        stats.candidates += len(ids)
        stats.results += len(order)
    return ids[order], d2[order]


def knn_query(
    idx: GridIndex, q: Point, k: int, class_a_only: bool = False, stats: QueryStats | None = None
) -> np.ndarray:
    return knn_query_with_distances(idx, q, k, class_a_only, stats)[0]
