"""Batch evaluation of many window/disk queries.

``queries``-based evaluation hands whole queries to workers round-robin.
``tiles``-based evaluation first plans every query and buckets the resulting
per-tile subtasks, then processes one non-empty tile at a time so that the
tile's tables stay cache resident while all queries touching it run.

Workers are forked processes (the GIL serializes numpy-light Python loops)
or threads; they inherit the index through a module global and return flat
``(query_id, object_id)`` arrays that are merged once at the end.
"""

from __future__ import annotations

import multiprocessing as mp
import time
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geometry import Disk, Mbr, boxes_mindist2
from .grid import tiles_intersecting_mbr
from .index import GridIndex, Variant
from .range_query import (
    QueryStats,
    RegionPlan,
    RegionTask,
    _disk_predicate,
    _window_axes,
    disk_query,
    onelevel_tile,
    plan_disk,
    region_tile,
    window_query,
    window_tile,
)

BatchQuery = Mbr | Disk

_EMPTY = np.empty(0, dtype=np.int64)


@dataclass
class BatchResult:
    results: list[np.ndarray]
    stats: QueryStats = field(default_factory=QueryStats)
    timings: dict[str, float] = field(default_factory=dict)
    subtasks: int = 0

    def __len__(self) -> int:
        return len(self.results)


# State shared with forked workers. Set before the pool starts, read-only afterwards.
_STATE: dict = {}


def _executor(kind: str, threads: int):
    if kind == "thread":
        return ThreadPoolExecutor(threads)
    if kind == "process":
        return ProcessPoolExecutor(threads, mp_context=mp.get_context("fork"))
    raise ValueError(f"unknown executor {kind!r}")


def _merge(n: int, parts: list[tuple[np.ndarray, np.ndarray]], dedup: bool = False) -> list[np.ndarray]:
    """Split flat (query_id, object_id) pairs into per-query sorted id arrays."""
    if parts:
        qids = np.concatenate([p[0] for p in parts])
        oids = np.concatenate([p[1] for p in parts])
    else:
        qids, oids = _EMPTY, _EMPTY
    order = np.lexsort((oids, qids))
    qids, oids = qids[order], oids[order]
    if dedup and len(oids):
        keep = np.ones(len(oids), dtype=bool)
        keep[1:] = (qids[1:] != qids[:-1]) | (oids[1:] != oids[:-1])
        qids, oids = qids[keep], oids[keep]
    bounds = np.searchsorted(qids, np.arange(n + 1))
    return [oids[bounds[i] : bounds[i + 1]] for i in range(n)]


# --- queries-based -------------------------------------------------------------


def _run_queries(qids: Sequence[int]):
    idx: GridIndex = _STATE["idx"]
    queries = _STATE["queries"]
    stats = QueryStats()
    q_out, o_out = [], []
    for qi in qids:
        q = queries[qi]
        ids = disk_query(idx, q, stats) if isinstance(q, Disk) else window_query(idx, q, stats)
        o_out.append(ids)
        q_out.append(np.full(len(ids), qi, dtype=np.int64))
    if not o_out:
        return _EMPTY, _EMPTY, stats
    return np.concatenate(q_out), np.concatenate(o_out), stats


def batch_queries_based(
    idx: GridIndex, queries: Sequence[BatchQuery], threads: int = 1, executor: str = "process"
) -> BatchResult:
    """Evaluate each query independently; with ``threads > 1`` queries go round-robin to workers."""
    if threads < 1:
        raise ValueError("threads must be positive")
    t0 = time.perf_counter()
    _STATE.update(idx=idx, queries=list(queries))
    n = len(queries)
    try:
        if threads == 1:
            outs = [_run_queries(range(n))]
        else:
            chunks = [range(j, n, threads) for j in range(threads)]
            with _executor(executor, threads) as ex:
                outs = list(ex.map(_run_queries, chunks))
    finally:
        _STATE.clear()
    t1 = time.perf_counter()
    stats = QueryStats()
    for _, _, s in outs:
        stats.merge(s)
    results = _merge(n, [(q, o) for q, o, _ in outs])
    t2 = time.perf_counter()
    return BatchResult(results, stats, {"execute": t1 - t0, "merge": t2 - t1, "total": t2 - t0})


# --- tiles-based -----------------------------------------------------------------

# Subtask encodings, bucketed by linear tile number:
#   ("w", qid, dx, dy, mx, my)      window on a class-partitioned index
#   ("r", qid, task)                disk region task
#   ("o", qid)                      one-level window (reference point) or disk


def plan_subtasks(
    idx: GridIndex, queries: Sequence[BatchQuery]
) -> tuple[dict[int, list[tuple]], dict[int, RegionPlan]]:
    """Phase 1: plan all queries and accumulate their subtasks per tile.

    Returns the buckets keyed by linear tile number and the region plan of
    every disk query (needed by its subtasks).
    """
    cfg = idx.cfg
    buckets: dict[int, list[tuple]] = {}
    plans: dict[int, RegionPlan] = {}
    one_level = idx.variant is Variant.ONE_LEVEL
    for qi, q in enumerate(queries):
        if isinstance(q, Disk):
            if one_level:
                qx, qy = q.center
                r2 = q.radius * q.radius
                for t in tiles_intersecting_mbr(cfg, q.mbr):
                    x0, y0, x1, y1 = cfg.tile_bounds(t.ix, t.iy)
                    dx = max(x0 - qx, 0.0, qx - x1)
                    dy = max(y0 - qy, 0.0, qy - y1)
                    if dx * dx + dy * dy <= r2:
                        buckets.setdefault(cfg.linear(t.ix, t.iy), []).append(("o", qi))
                continue
            plan = plans[qi] = plan_disk(idx, q)
            for task in plan.tasks:
                buckets.setdefault(cfg.linear(*task.tile), []).append(("r", qi, task))
            continue
        axes = _window_axes(cfg, q)
        if axes is None:
            continue
        xs, ys = axes
        for iy, dy, my in ys:
            for ix, dx, mx in xs:
                sub = ("o", qi) if one_level else ("w", qi, dx, dy, mx, my)
                buckets.setdefault(iy * cfg.nx + ix, []).append(sub)
    return buckets, plans


def _run_tiles(tiles: Sequence[int]):
    idx: GridIndex = _STATE["idx"]
    queries = _STATE["queries"]
    buckets = _STATE["buckets"]
    plans: dict[int, RegionPlan] = _STATE["plans"]
    preds = _STATE["preds"]
    dec = idx.decomposed
    nx = idx.cfg.nx
    stats = QueryStats()
    q_out, o_out = [], []
    for t in tiles:
        iy, ix = divmod(t, nx)
        for sub in buckets[t]:
            qi = sub[1]
            q = queries[qi]
            if sub[0] != "r":
                stats.tiles += 1
            if sub[0] == "w":
                out: list[np.ndarray] = []
                stats.comparisons += window_tile(idx, t * 4, sub[2], sub[3], sub[4], sub[5], q, dec, out)
                for ids in out:
                    o_out.append(ids)
                    q_out.append(np.full(len(ids), qi, dtype=np.int64))
            elif sub[0] == "r":
                task: RegionTask = sub[2]
                hit = region_tile(idx, plans[qi], task, preds[qi], stats)
                if hit is not None:
                    o_out.append(hit[0])
                    q_out.append(np.full(len(hit[0]), qi, dtype=np.int64))
            else:
                out = []
                if isinstance(q, Disk):
                    qx, qy = q.center
                    r2 = q.radius * q.radius
                    for tb in idx.tile_tables((ix, iy)):
                        if tb.n:
                            stats.distance_computations += tb.n
                            out.append(tb.ids[boxes_mindist2(tb.cols, qx, qy) <= r2])
                else:
                    stats.comparisons += onelevel_tile(idx, ix, iy, q, out)
                for ids in out:
                    o_out.append(ids)
                    q_out.append(np.full(len(ids), qi, dtype=np.int64))
    if not o_out:
        return _EMPTY, _EMPTY, stats
    return np.concatenate(q_out), np.concatenate(o_out), stats


def batch_tiles_based(
    idx: GridIndex,
    queries: Sequence[BatchQuery],
    threads: int = 1,
    executor: str = "process",
    chunk_tiles: int = 16,
) -> BatchResult:
    """Plan all queries, then process non-empty tiles with every subtask touching them.

    Workers pull chunks of ``chunk_tiles`` tiles on demand, which balances
    skewed tile loads. One-level disk results are deduplicated at the merge,
    since the baseline has no duplicate-free disk rule.
    """
    if threads < 1:
        raise ValueError("threads must be positive")
    queries = list(queries)
    t0 = time.perf_counter()
    buckets, plans = plan_subtasks(idx, queries)
    preds = {qi: _disk_predicate(queries[qi]) for qi in plans}
    t1 = time.perf_counter()
    counts = idx.cell_counts
    tiles = [t for t in sorted(buckets) if counts[t]]
    n_sub = sum(len(v) for v in buckets.values())
    _STATE.update(idx=idx, queries=queries, buckets=buckets, plans=plans, preds=preds)
    try:
        if threads == 1:
            outs = [_run_tiles(tiles)]
        else:
            chunks = [tiles[i : i + chunk_tiles] for i in range(0, len(tiles), chunk_tiles)]
            with _executor(executor, threads) as ex:
                outs = list(ex.map(_run_tiles, chunks))
    finally:
        _STATE.clear()
    t2 = time.perf_counter()
    stats = QueryStats()
    for _, _, s in outs:
        stats.merge(s)
    dedup = idx.variant is Variant.ONE_LEVEL and any(isinstance(q, Disk) for q in queries)
    results = _merge(len(queries), [(q, o) for q, o, _ in outs], dedup=dedup)
    stats.results += sum(len(r) for r in results)
    t3 = time.perf_counter()
    return BatchResult(results, stats, {"plan": t1 - t0, "execute": t2 - t1, "merge": t3 - t2, "total": t3 - t0}, n_sub)


def run_batch(idx: GridIndex, queries: Sequence[BatchQuery], strategy: str = "tiles", threads: int = 1, executor: str = "process") -> BatchResult:
    if strategy == "queries":
        return batch_queries_based(idx, queries, threads, executor)
    if strategy == "tiles":
        return batch_tiles_based(idx, queries, threads, executor)
    raise ValueError(f"unknown batch strategy {strategy!r}")
