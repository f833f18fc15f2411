"""Spatial intersection join of two class-partitioned grids built on the same configuration.

At each tile the join splits into 16 class-pair joins. A pair of classes that
both have the bit of some dimension set describes two rectangles that both
start before the tile in that dimension; if they intersect, they also
intersect in the previous tile along that dimension, so the pair is reported
there. Only the 9 pairs with disjoint bits are evaluated, and every
intersecting pair comes out exactly once: at the tile containing the point
``max(r.lo, s.lo)``.
"""

from __future__ import annotations

import multiprocessing as mp
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .grid import ALL_CLASSES, ClassId, TileId
from .index import GridIndex, Variant

_EMPTY = np.empty(0, dtype=np.int64)


@dataclass(frozen=True)
class ClassPairMatrix:
    """Evaluate/skip decision for the 16 ordered class pairs ``(c_R, c_S)``."""

    @staticmethod
    def evaluated(c_r: ClassId | int, c_s: ClassId | int) -> bool:
        return (int(c_r) & int(c_s)) == 0

    @property
    def evaluated_pairs(self) -> list[tuple[ClassId, ClassId]]:
        return [(a, b) for a in ALL_CLASSES for b in ALL_CLASSES if self.evaluated(a, b)]

    @property
    def skipped_pairs(self) -> list[tuple[ClassId, ClassId]]:
        return [(a, b) for a in ALL_CLASSES for b in ALL_CLASSES if not self.evaluated(a, b)]


MATRIX = ClassPairMatrix()
EVALUATED = tuple((int(a), int(b)) for a, b in MATRIX.evaluated_pairs)
SKIPPED = tuple((int(a), int(b)) for a, b in MATRIX.skipped_pairs)


def _expand(starts: np.ndarray, ends: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row index and column index for every ``j`` in ``[starts[i], ends[i])``."""
    lens = ends - starts
    total = int(lens.sum())
    if total == 0:
        return _EMPTY, _EMPTY
    rows = np.repeat(np.arange(len(starts)), lens)
    offs = np.arange(total) - np.repeat(np.cumsum(lens) - lens, lens)
    return rows, np.repeat(starts, lens) + offs


def plane_sweep(rc: np.ndarray, sc: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Intersecting pairs of two ``xlo``-sorted column groups, as index arrays.

    Forward sweep: each pair is found from the rectangle with the smaller
    ``xlo`` (ties go to ``r``), scanning the other list while ``xlo`` stays
    within its x-extent; the y-test filters the scanned pairs.
    """
    if rc.shape[1] == 0 or sc.shape[1] == 0:
        return _EMPTY, _EMPTY
    r_xlo, s_xlo = rc[0], sc[0]
    # s starting inside r's x-extent (s.xlo >= r.xlo)
    a0 = np.searchsorted(s_xlo, r_xlo, "left")
    a1 = np.searchsorted(s_xlo, rc[2], "right")
    ri1, si1 = _expand(a0, np.maximum(a0, a1))
    # r starting strictly after s (r.xlo > s.xlo) inside s's x-extent
    b0 = np.searchsorted(r_xlo, s_xlo, "right")
    b1 = np.searchsorted(r_xlo, sc[2], "right")
    si2, ri2 = _expand(b0, np.maximum(b0, b1))
    ri = np.concatenate([ri1, ri2])
    si = np.concatenate([si1, si2])
    ok = (rc[1, ri] <= sc[3, si]) & (sc[1, si] <= rc[3, ri])
    return ri[ok], si[ok]


def nested_loop(rc: np.ndarray, sc: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Reference all-pairs join of two column groups."""
    ok = (
        (rc[0][:, None] <= sc[2][None, :])
        & (sc[0][None, :] <= rc[2][:, None])
        & (rc[1][:, None] <= sc[3][None, :])
        & (sc[1][None, :] <= rc[3][:, None])
    )
    ri, si = np.nonzero(ok)
    return ri.astype(np.int64), si.astype(np.int64)


def _sorted_group(idx: GridIndex, pos: int) -> tuple[np.ndarray, np.ndarray]:
    """Class table at ``pos`` ordered by ``xlo``; sorted once and cached unless presorted."""
    tb = idx.tables[pos]
    if idx.presorted:
        return tb.cols, tb.ids
    cache = idx.__dict__.setdefault("_xsorted", {})
    hit = cache.get(pos)
    if hit is None or hit[1].shape[0] != tb.n:
        order = np.argsort(tb.cols[0], kind="stable")
        hit = cache[pos] = (tb.cols[:, order], tb.ids[order])
    return hit


def tile_join(
    idx_r: GridIndex, idx_s: GridIndex, tile: TileId | tuple[int, int], pairs: Sequence[tuple[int, int]] = EVALUATED
) -> tuple[np.ndarray, np.ndarray]:
    """Intersecting ``(idR, idS)`` pairs discovered at one tile under the class-pair matrix."""
    base = (tile[1] * idx_r.cfg.nx + tile[0]) * 4
    r_out, s_out = [], []
    for cr, cs in pairs:
        if not idx_r.tables[base + cr].n or not idx_s.tables[base + cs].n:
            continue
        rc, rid = _sorted_group(idx_r, base + cr)
        sc, sid = _sorted_group(idx_s, base + cs)
        ri, si = plane_sweep(rc, sc)
        if len(ri):
            r_out.append(rid[ri])
            s_out.append(sid[si])
    if not r_out:
        return _EMPTY, _EMPTY
    return np.concatenate(r_out), np.concatenate(s_out)


def _check(idx_r: GridIndex, idx_s: GridIndex) -> None:
    if idx_r.cfg != idx_s.cfg:
        raise ValueError(f"grid configurations differ: {idx_r.cfg} vs {idx_s.cfg}")
    if Variant.ONE_LEVEL in (idx_r.variant, idx_s.variant):
        raise ValueError("the join needs class-partitioned (2level/2level+) indexes")


_STATE: dict = {}


def _join_tiles(tiles: Sequence[int]):
    idx_r, idx_s, pairs = _STATE["r"], _STATE["s"], _STATE["pairs"]
    nx = idx_r.cfg.nx
    r_out, s_out = [], []
    for t in tiles:
        iy, ix = divmod(t, nx)
        a, b = tile_join(idx_r, idx_s, (ix, iy), pairs)
        if len(a):
            r_out.append(a)
            s_out.append(b)
    if not r_out:
        return _EMPTY, _EMPTY
    return np.concatenate(r_out), np.concatenate(s_out)


def spatial_join(
    idx_r: GridIndex,
    idx_s: GridIndex,
    threads: int = 1,
    executor: str = "process",
    pairs: Sequence[tuple[int, int]] = EVALUATED,
) -> tuple[np.ndarray, np.ndarray]:
    """All ``(idR, idS)`` with intersecting MBRs, each once, as two aligned arrays.

    The output is the raw concatenation of per-tile results (no deduplication).
    """
    _check(idx_r, idx_s)
    if threads < 1:
        raise ValueError("threads must be positive")
    tiles = np.nonzero((idx_r.cell_counts > 0) & (idx_s.cell_counts > 0))[0].tolist()
    if not idx_r.presorted or not idx_s.presorted:
        # fill the sort caches before forking so workers share them
        for t in tiles:
            for c in range(4):
                for idx in (idx_r, idx_s):
                    if idx.tables[t * 4 + c].n:
                        _sorted_group(idx, t * 4 + c)
    _STATE.update(r=idx_r, s=idx_s, pairs=tuple(pairs))
    try:
        if threads == 1:
            outs = [_join_tiles(tiles)]
        else:
            step = max(1, len(tiles) // (threads * 8))
            chunks = [tiles[i : i + step] for i in range(0, len(tiles), step)]
            if executor == "thread":
                ex = ThreadPoolExecutor(threads)
            elif executor == "process":
                ex = ProcessPoolExecutor(threads, mp_context=mp.get_context("fork"))
            else:
                raise ValueError(f"unknown executor {executor!r}")
            with ex:
                outs = list(ex.map(_join_tiles, chunks))
    finally:
        _STATE.clear()
    outs = [o for o in outs if len(o[0])]
    if not outs:
        return _EMPTY, _EMPTY
    return np.concatenate([o[0] for o in outs]), np.concatenate([o[1] for o in outs])


@dataclass
class SkipAudit:
    skipped_emissions: int
    missing: int
    per_pair: dict[tuple[str, str], int]

    @property
    def ok(self) -> bool:
        return self.missing == 0


def skip_audit(idx_r: GridIndex, idx_s: GridIndex) -> SkipAudit:
    """Evaluate the 7 skipped class pairs too and check that all their pairs appear in the join."""
    r_ids, s_ids = spatial_join(idx_r, idx_s)
    found = set(zip(r_ids.tolist(), s_ids.tolist()))
    per_pair: dict[tuple[str, str], int] = {}
    total = missing = 0
    tiles = np.nonzero((idx_r.cell_counts > 0) & (idx_s.cell_counts > 0))[0].tolist()
    nx = idx_r.cfg.nx
    for cr, cs in SKIPPED:
        n = 0
        for t in tiles:
            iy, ix = divmod(t, nx)
            a, b = tile_join(idx_r, idx_s, (ix, iy), [(cr, cs)])
            n += len(a)
            missing += sum((p not in found) for p in zip(a.tolist(), b.tolist()))
        per_pair[(ClassId(cr).name, ClassId(cs).name)] = n
        total += n
    return SkipAudit(total, missing, per_pair)
