"""Refinement stage: avoidance tests that certify candidates from their MBR alone, plus exact checks.

An object whose geometry is connected touches every side of its MBR. If a
window covers the MBR in one dimension, the geometry must cross the window
along that dimension, so the candidate is a result without looking at the
geometry. For disks the same holds when two MBR corners lie in the disk.
"""

from __future__ import annotations

from enum import Enum
from typing import Iterator

import numpy as np

from .geometry import (
    Disk,
    Mbr,
    geometry_intersects_disk,
    geometry_intersects_mbr,
    mbr_intersects,
)
from .index import GridIndex, ObjectRecord, Variant
from .range_query import (
    QueryStats,
    _disk_predicate,
    _disk_query_hash,
    iter_region_candidates,
    iter_window_candidates,
    plan_disk,
)


class RefinementMode(str, Enum):
    SIMPLE = "simple"
    REFAVOID = "refavoid"
    REFAVOID_PLUS = "refavoid+"


def refine_avoid_window(r: Mbr, w: Mbr) -> bool:
    """True when ``w`` covers ``r`` in at least one dimension (a definite result)."""
    if not mbr_intersects(r, w):
        raise ValueError(f"{r} does not intersect window {w}")
    return (w.xlo <= r.xlo and r.xhi <= w.xhi) or (w.ylo <= r.ylo and r.yhi <= w.yhi)


def refine_avoid_window_fast(r: Mbr, w: Mbr, tile_ctx: tuple[bool, bool]) -> bool:
    """As :func:`refine_avoid_window`, skipping ``w.lo <= r.lo`` in flagged dimensions.

    A flag means the window starts before the tile in which ``r`` was found
    and ``r`` starts inside that tile, so the skipped test is known to hold.
    """
    if __debug__ and tile_ctx[0] and not w.xlo <= r.xlo:
        raise AssertionError("x flag set but window does not start before r")
    if __debug__ and tile_ctx[1] and not w.ylo <= r.ylo:
        raise AssertionError("y flag set but window does not start before r")
    x_ok = r.xhi <= w.xhi and (tile_ctx[0] or w.xlo <= r.xlo)
    return x_ok or (r.yhi <= w.yhi and (tile_ctx[1] or w.ylo <= r.ylo))


def refine_avoid_disk(r: Mbr, d: Disk) -> bool:
    """True when at least two corners of ``r`` lie in the closed disk."""
    qx, qy = d.center
    r2 = d.radius * d.radius
    inside = 0
    for cx, cy in r.corners():
        if (cx - qx) ** 2 + (cy - qy) ** 2 <= r2:
            inside += 1
    return inside >= 2


def _avoid_window_cols(cols: np.ndarray, w: Mbr, ctx: tuple[bool, bool]) -> tuple[np.ndarray, int]:
    """Vectorized avoidance test; returns the mask and comparisons per entry."""
    x_ok = cols[2] <= w.xhi
    if not ctx[0]:
        x_ok &= w.xlo <= cols[0]
    y_ok = cols[3] <= w.yhi
    if not ctx[1]:
        y_ok &= w.ylo <= cols[1]
    return x_ok | y_ok, 4 - ctx[0] - ctx[1]


def _avoid_disk_cols(cols: np.ndarray, d: Disk) -> np.ndarray:
    qx, qy = d.center
    r2 = d.radius * d.radius
    dx0, dx1 = (cols[0] - qx) ** 2, (cols[2] - qx) ** 2
    dy0, dy1 = (cols[1] - qy) ** 2, (cols[3] - qy) ** 2
    inside = (
        (dx0 + dy0 <= r2).astype(np.int8)
        + (dx0 + dy1 <= r2)
        + (dx1 + dy0 <= r2)
        + (dx1 + dy1 <= r2)
    )
    return inside >= 2


def refine(obj: ObjectRecord, query: Mbr | Disk) -> bool:
    """Exact geometry test of one candidate."""
    if obj.geometry is None:
        raise ValueError(f"object {obj.id} has no geometry; the index is MBR-only")
    if isinstance(query, Disk):
        return geometry_intersects_disk(obj.geometry, query)
    return geometry_intersects_mbr(obj.geometry, query)


def _gather(idx: GridIndex, ids: np.ndarray) -> np.ndarray:
    rows = np.fromiter((idx.store.row_of[i] for i in ids.tolist()), dtype=np.int64, count=len(ids))
    return idx.store.cols[:, rows]


def _disk_candidates(idx: GridIndex, d: Disk, stats: QueryStats) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    if idx.variant is Variant.ONE_LEVEL:
        sub = QueryStats()
        ids = _disk_query_hash(idx, d, sub)
        sub.results = 0
        stats.merge(sub)
        yield ids, _gather(idx, ids)
        return
    plan = plan_disk(idx, d)
    for _, ids, cols in iter_region_candidates(idx, plan, _disk_predicate(d), stats):
        yield ids, cols


def query_with_refinement(
    idx: GridIndex,
    query: Mbr | Disk,
    mode: RefinementMode | str = RefinementMode.REFAVOID,
    stats: QueryStats | None = None,
) -> np.ndarray:
    """Exact answer over object geometries: filter step, avoidance, then refinement.

    ``simple`` refines every candidate, ``refavoid`` only those failing the
    avoidance test, and ``refavoid+`` (windows only) also drops comparisons
    implied by the tile a candidate was found in.
    """
    mode = RefinementMode(mode)
    if not idx.has_geometry:
        raise ValueError("refinement needs an index built with geometries")
    is_disk = isinstance(query, Disk)
    if is_disk and mode is RefinementMode.REFAVOID_PLUS:
        raise ValueError("refavoid+ is only defined for window queries")
    stats = stats if stats is not None else QueryStats()
    store = idx.store
    out: list[int] = []
    if is_disk:
        batches = ((None, ids, cols) for ids, cols in _disk_candidates(idx, query, stats))
    else:
        batches = ((ctx, ids, cols) for ctx, ids, cols in iter_window_candidates(idx, query, stats))
    for ctx, ids, cols in batches:
        if mode is RefinementMode.SIMPLE:
            sure = np.zeros(len(ids), dtype=bool)
        elif is_disk:
            sure = _avoid_disk_cols(cols, query)
            stats.distance_computations += 4 * len(ids)
        else:
            use = ctx if mode is RefinementMode.REFAVOID_PLUS else (False, False)
            sure, nc = _avoid_window_cols(cols, query, use)
            stats.comparisons += nc * len(ids)
        n_sure = int(sure.sum())
        stats.refinements_avoided += n_sure
        stats.refinements_run += len(ids) - n_sure
        out.extend(ids[sure].tolist())
        test = geometry_intersects_disk if is_disk else geometry_intersects_mbr
        for oid in ids[~sure].tolist():
            if test(store.geometry(oid), query):
                out.append(oid)
    res = np.asarray(out, dtype=np.int64)
    stats.results += len(res)
    return res

