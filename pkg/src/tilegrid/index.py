"""Grid index construction, storage variants and incremental inserts.

Three storage layouts share one bucket addressing scheme:

* ``1level``  - one unordered table of (MBR, id) entries per tile;
* ``2level``  - four tables per tile, one per class A/B/C/D;
* ``2level+`` - the ``2level`` tables plus, per class, four decomposed
  columns (xlo, ylo, xhi, yhi) each sorted by coordinate and paired with ids.

MBR columns are kept as ``(4, n)`` float arrays in ``xlo, ylo, xhi, yhi``
row order so that each coordinate is a contiguous vector.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .geometry import Geometry, Mbr
from .grid import ClassId, GridConfig, TileId

log = logging.getLogger(__name__)


class Variant(str, Enum):
    ONE_LEVEL = "1level"
    TWO_LEVEL = "2level"
    TWO_LEVEL_PLUS = "2level+"

    @property
    def classes(self) -> int:
        return 1 if self is Variant.ONE_LEVEL else 4


class GridIndexError(ValueError):
    """Invalid index operation (duplicate id, object outside the domain, ...)."""


@dataclass(frozen=True)
class ObjectRecord:
    id: int
    mbr: Mbr
    geometry: Geometry | None = None


class Table:
    """Append-only heap of (MBR, id) entries with amortized O(1) growth."""

    __slots__ = ("cols", "ids", "_cbuf", "_ibuf", "n")

    def __init__(self, cols: np.ndarray | None = None, ids: np.ndarray | None = None) -> None:
        if cols is None:
            cols = np.empty((4, 0), dtype=np.float64)
            ids = np.empty(0, dtype=np.int64)
        self._cbuf = cols
        self._ibuf = ids
        self.n = len(ids)
        self.cols = cols
        self.ids = ids

    def __len__(self) -> int:
        return self.n

    def _grow(self) -> None:
        cap = max(4, 2 * self.n)
        cbuf = np.empty((4, cap), dtype=np.float64)
        ibuf = np.empty(cap, dtype=np.int64)
        cbuf[:, : self.n] = self.cols
        ibuf[: self.n] = self.ids
        self._cbuf, self._ibuf = cbuf, ibuf

    def append(self, box: tuple[float, float, float, float], oid: int) -> None:
        if self.n == len(self._ibuf):
            self._grow()
        self._cbuf[:, self.n] = box
        self._ibuf[self.n] = oid
        self.n += 1
        self.cols = self._cbuf[:, : self.n]
        self.ids = self._ibuf[: self.n]

    def insert_at(self, pos: int, box: tuple[float, float, float, float], oid: int) -> None:
        """Insert keeping the existing order (used for lo[0]-presorted tables)."""
        self.append(box, oid)
        if pos < self.n - 1:
            self._cbuf[:, pos + 1 : self.n] = self._cbuf[:, pos : self.n - 1].copy()
            self._ibuf[pos + 1 : self.n] = self._ibuf[pos : self.n - 1].copy()
            self._cbuf[:, pos] = box
            self._ibuf[pos] = oid

    @property
    def nbytes(self) -> int:
        return self.n * (4 * 8 + 8)


class Decomposed:
    """Per-class decomposed storage: four (coordinate, id) columns, each sorted."""

    __slots__ = ("vals", "ids")

    def __init__(self, vals: np.ndarray, ids: np.ndarray) -> None:
        self.vals = vals  # (4, n): sorted xlo, ylo, xhi, yhi
        self.ids = ids  # (4, n): ids aligned with vals

    @classmethod
    def empty(cls) -> Decomposed:
        return cls(np.empty((4, 0), dtype=np.float64), np.empty((4, 0), dtype=np.int64))

    def __len__(self) -> int:
        return self.vals.shape[1]

    def insert(self, box: tuple[float, float, float, float], oid: int) -> None:
        n = len(self)
        vals = np.empty((4, n + 1), dtype=np.float64)
        ids = np.empty((4, n + 1), dtype=np.int64)
        for c in range(4):
            # after equal keys, so earlier inserts keep their relative order
            pos = int(np.searchsorted(self.vals[c], box[c], side="right"))
            vals[c, :pos] = self.vals[c, :pos]
            vals[c, pos] = box[c]
            vals[c, pos + 1 :] = self.vals[c, pos:]
            ids[c, :pos] = self.ids[c, :pos]
            ids[c, pos] = oid
            ids[c, pos + 1 :] = self.ids[c, pos:]
        self.vals, self.ids = vals, ids

    @property
    def nbytes(self) -> int:
        return int(self.vals.nbytes + self.ids.nbytes)


class ObjectStore:
    """Id-indexed store holding each object's MBR and geometry exactly once."""

    def __init__(self) -> None:
        self._cbuf = np.empty((4, 0), dtype=np.float64)
        self._ibuf = np.empty(0, dtype=np.int64)
        self.n = 0
        self.row_of: dict[int, int] = {}
        self.geometries: list[Geometry | None] = []

    def __len__(self) -> int:
        return self.n

    @property
    def cols(self) -> np.ndarray:
        return self._cbuf[:, : self.n]

    @property
    def ids(self) -> np.ndarray:
        return self._ibuf[: self.n]

    @property
    def has_geometry(self) -> bool:
        return self.n > 0 and all(g is not None for g in self.geometries)

    def extend(self, ids: np.ndarray, cols: np.ndarray, geometries: Sequence[Geometry | None] | None) -> None:
        k = len(ids)
        need = self.n + k
        if need > len(self._ibuf):
            cap = max(need, 2 * len(self._ibuf))
            cbuf = np.empty((4, cap), dtype=np.float64)
            ibuf = np.empty(cap, dtype=np.int64)
            cbuf[:, : self.n] = self.cols
            ibuf[: self.n] = self.ids
            self._cbuf, self._ibuf = cbuf, ibuf
        self._cbuf[:, self.n : need] = cols
        self._ibuf[self.n : need] = ids
        for j, oid in enumerate(ids.tolist()):
            self.row_of[oid] = self.n + j
        self.geometries.extend(geometries if geometries is not None else [None] * k)
        self.n = need

    def mbr(self, oid: int) -> Mbr:
        return Mbr(*self._cbuf[:, self.row_of[oid]].tolist())

    def geometry(self, oid: int) -> Geometry | None:
        return self.geometries[self.row_of[oid]]

    def record(self, oid: int) -> ObjectRecord:
        return ObjectRecord(oid, self.mbr(oid), self.geometry(oid))


def _records_to_arrays(objects: Iterable[ObjectRecord]):
    objs = list(objects)
    ids = np.fromiter((o.id for o in objs), dtype=np.int64, count=len(objs))
    cols = np.empty((4, len(objs)), dtype=np.float64)
    for j, o in enumerate(objs):
        m = o.mbr
        cols[:, j] = (m.xlo, m.ylo, m.xhi, m.yhi)
        if o.geometry is not None and o.geometry.mbr != m:
            raise GridIndexError(f"object {o.id}: geometry MBR {o.geometry.mbr} != stored MBR {m}")
    geoms = [o.geometry for o in objs]
    return ids, cols, (geoms if any(g is not None for g in geoms) else None)


class GridIndex:
    """Two-level (or baseline one-level) uniform grid over (MBR, id) entries.

    Build with :meth:`build` / :meth:`from_arrays`; afterwards the index may be
    read by any number of threads, but :meth:`insert` needs exclusive access.
    """

    def __init__(self, cfg: GridConfig, variant: Variant | str, presort: bool = False) -> None:
        self.cfg = cfg
        self.variant = Variant(variant)
        self.nclasses = self.variant.classes
        self.presorted = presort
        self.store = ObjectStore()
        self.tables: list[Table] = []
        self.decomposed: list[Decomposed] | None = None
        self.cell_counts = np.zeros(cfg.num_tiles, dtype=np.int64)
        self.class_a_counts = np.zeros(cfg.num_tiles, dtype=np.int64)

    # -- construction ------------------------------------------------------

    @classmethod
    def build(
        cls,
        cfg: GridConfig,
        variant: Variant | str,
        objects: Iterable[ObjectRecord],
        presort: bool = False,
    ) -> GridIndex:
        ids, cols, geoms = _records_to_arrays(objects)
        return cls.from_arrays(cfg, variant, ids, cols, geoms, presort=presort)

    @classmethod
    def from_arrays(
        cls,
        cfg: GridConfig,
        variant: Variant | str,
        ids: np.ndarray,
        cols: np.ndarray,
        geometries: Sequence[Geometry | None] | None = None,
        presort: bool = False,
    ) -> GridIndex:
        """Bulk-load from an id vector and ``(4, n)`` MBR columns."""
        idx = cls(cfg, variant, presort)
        ids = np.ascontiguousarray(ids, dtype=np.int64)
        cols = np.ascontiguousarray(cols, dtype=np.float64).reshape(4, -1)
        if len(ids) != cols.shape[1]:
            raise GridIndexError("ids and MBR columns differ in length")
        if len(np.unique(ids)) != len(ids):
            raise GridIndexError("duplicate object ids")
        _validate_cols(cfg, cols)
        idx.store.extend(ids, cols, geometries)
        idx._bulk_load(ids, cols)
        return idx

    def _assignments(self, cols: np.ndarray):
        cfg = self.cfg
        ix0 = cfg.locate_x_array(cols[0])
        iy0 = cfg.locate_y_array(cols[1])
        ix1 = cfg.locate_x_array(cols[2])
        iy1 = cfg.locate_y_array(cols[3])
        wx = ix1 - ix0 + 1
        cnt = wx * (iy1 - iy0 + 1)
        total = int(cnt.sum())
        obj = np.repeat(np.arange(len(cnt)), cnt)
        start = np.repeat(np.cumsum(cnt) - cnt, cnt)
        k = np.arange(total) - start
        w = wx[obj]
        dx = k % w
        dy = k // w
        tile = (iy0[obj] + dy) * cfg.nx + ix0[obj] + dx
        if self.nclasses == 4:
            cls_ = 2 * (dx > 0) + (dy > 0)
        else:
            cls_ = np.zeros(total, dtype=np.int64)
        return obj, tile, cls_

    def _bulk_load(self, ids: np.ndarray, cols: np.ndarray) -> None:
        nc = self.nclasses
        nkeys = self.cfg.num_tiles * nc
        obj, tile, cls_ = self._assignments(cols)
        key = tile * nc + cls_
        if self.presorted:
            order = np.lexsort((cols[0][obj], key))
        else:
            order = np.argsort(key, kind="stable")
        key_s = key[order]
        obj_s = obj[order]
        cols_s = np.ascontiguousarray(cols[:, obj_s])
        ids_s = ids[obj_s]
        counts = np.bincount(key_s, minlength=nkeys)
        bounds = np.concatenate(([0], np.cumsum(counts))).tolist()
        self.tables = [Table(cols_s[:, bounds[k] : bounds[k + 1]], ids_s[bounds[k] : bounds[k + 1]]) for k in range(nkeys)]
        self.cell_counts = counts.reshape(-1, nc).sum(axis=1)
        self.class_a_counts = counts.reshape(-1, nc)[:, 0].copy()
        if self.variant is Variant.TWO_LEVEL_PLUS:
            vals = np.empty_like(cols_s)
            dids = np.empty((4, len(ids_s)), dtype=np.int64)
            for c in range(4):
                o = np.lexsort((cols_s[c], key_s))
                vals[c] = cols_s[c][o]
                dids[c] = ids_s[o]
            self.decomposed = [
                Decomposed(vals[:, bounds[k] : bounds[k + 1]], dids[:, bounds[k] : bounds[k + 1]]) for k in range(nkeys)
            ]
        log.debug("bulk-loaded %d objects into %d entries", len(ids), len(obj))

    # -- updates -----------------------------------------------------------

    def insert(self, obj: ObjectRecord) -> None:
        """Add one object to every tile it meets, in the matching class table."""
        m = obj.mbr
        if obj.id in self.store.row_of:
            raise GridIndexError(f"duplicate object id {obj.id}")
        if obj.geometry is not None and obj.geometry.mbr != m:
            raise GridIndexError(f"object {obj.id}: geometry MBR differs from stored MBR")
        box = (m.xlo, m.ylo, m.xhi, m.yhi)
        cols = np.array(box, dtype=np.float64).reshape(4, 1)
        _validate_cols(self.cfg, cols)
        self.store.extend(np.array([obj.id], dtype=np.int64), cols, [obj.geometry])
        cfg = self.cfg
        ix0, iy0 = cfg.locate_x(m.xlo), cfg.locate_y(m.ylo)
        ix1, iy1 = cfg.locate_x(m.xhi), cfg.locate_y(m.yhi)
        nc = self.nclasses
        for iy in range(iy0, iy1 + 1):
            for ix in range(ix0, ix1 + 1):
                t = iy * cfg.nx + ix
                c = (2 * (ix > ix0) + (iy > iy0)) if nc == 4 else 0
                k = t * nc + c
                tb = self.tables[k]
                if self.presorted:
                    tb.insert_at(int(np.searchsorted(tb.cols[0], m.xlo, side="right")), box, obj.id)
                else:
                    tb.append(box, obj.id)
                if self.decomposed is not None:
                    self.decomposed[k].insert(box, obj.id)
                self.cell_counts[t] += 1
                if c == 0:
                    self.class_a_counts[t] += 1

    # -- accessors -----------------------------------------------------------

    def table(self, ix: int, iy: int, c: ClassId | int = 0) -> Table:
        return self.tables[(iy * self.cfg.nx + ix) * self.nclasses + int(c)]

    def tile_tables(self, t: TileId) -> list[Table]:
        k = (t[1] * self.cfg.nx + t[0]) * self.nclasses
        return self.tables[k : k + self.nclasses]

    def tile_entries(self, t: TileId) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """All entries of a tile as ``(cols, ids, class)`` arrays."""
        tabs = self.tile_tables(t)
        cols = np.concatenate([tb.cols for tb in tabs], axis=1)
        ids = np.concatenate([tb.ids for tb in tabs])
        cls_ = np.concatenate([np.full(len(tb), c, dtype=np.int64) for c, tb in enumerate(tabs)])
        return cols, ids, cls_

    @property
    def num_objects(self) -> int:
        return len(self.store)

    @property
    def num_entries(self) -> int:
        return int(self.cell_counts.sum())

    @property
    def has_geometry(self) -> bool:
        return self.store.has_geometry

    @property
    def nbytes(self) -> int:
        """Bytes held by bucket tables (plus decomposed columns for ``2level+``)."""
        size = sum(tb.nbytes for tb in self.tables)
        if self.decomposed is not None:
            size += sum(d.nbytes for d in self.decomposed)
        return int(size)

    def replication_ratio(self) -> float:
        return replication_ratio(self)

    def __repr__(self) -> str:
        return (
            f"GridIndex({self.cfg.nx}x{self.cfg.ny}, variant={self.variant.value}, "
            f"objects={self.num_objects}, entries={self.num_entries})"
        )


def _validate_cols(cfg: GridConfig, cols: np.ndarray) -> None:
    if not np.isfinite(cols).all():
        raise GridIndexError("non-finite MBR coordinate")
    if (cols[0] > cols[2]).any() or (cols[1] > cols[3]).any():
        raise GridIndexError("inverted MBR (lo > hi)")
    d = cfg.domain
    outside = (cols[0] < d.xlo) | (cols[2] > d.xhi) | (cols[1] < d.ylo) | (cols[3] > d.yhi)
    if outside.any():
        raise GridIndexError(f"{int(outside.sum())} MBR(s) extend beyond the grid domain {d.as_tuple()}")


def build(
    cfg: GridConfig,
    variant: Variant | str,
    objects: Iterable[ObjectRecord],
    presort: bool = False,
) -> GridIndex:
    return GridIndex.build(cfg, variant, objects, presort=presort)


def insert(idx: GridIndex, obj: ObjectRecord) -> GridIndex:
    idx.insert(obj)
    return idx


def replication_ratio(idx: GridIndex) -> float:
    """Bucket entries per object; 1.0 by convention for an empty index."""
    if idx.num_objects == 0:
        return 1.0
    return idx.num_entries / idx.num_objects
