"""Dataset ingestion and writing: MBR CSV files and ``id<TAB>WKT`` files.

Coordinates are mapped affinely into the unit square, each axis scaled
independently; the original bounding box and aspect ratio are kept as
metadata. Data already inside the unit square passes through unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np
import shapely.wkt
from shapely.errors import ShapelyError

from .geometry import Geometry, GeometryKind, Mbr
from .index import ObjectRecord


class DatasetFormatError(ValueError):
    """Raised for malformed input, with the offending line number in the message."""


@dataclass(frozen=True)
class Transform:
    """``x' = (x - tx) / dx`` and ``y' = (y - ty) / dy``."""

    tx: float = 0.0
    ty: float = 0.0
    dx: float = 1.0
    dy: float = 1.0

    @property
    def identity(self) -> bool:
        return (self.tx, self.ty, self.dx, self.dy) == (0.0, 0.0, 1.0, 1.0)

    def apply_x(self, x: np.ndarray) -> np.ndarray:
        return x if self.identity else (x - self.tx) / self.dx

    def apply_y(self, y: np.ndarray) -> np.ndarray:
        return y if self.identity else (y - self.ty) / self.dy


@dataclass
class Dataset:
    ids: np.ndarray
    cols: np.ndarray
    geometries: list[Geometry] | None = None
    source: str = ""
    original_bbox: Mbr | None = None
    transform: Transform = field(default_factory=Transform)

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def aspect_ratio(self) -> float:
        b = self.original_bbox
        if b is None or b.yhi == b.ylo:
            return 1.0
        return (b.xhi - b.xlo) / (b.yhi - b.ylo)

    @property
    def records(self) -> Iterator[ObjectRecord]:
        geoms = self.geometries
        for j, oid in enumerate(self.ids.tolist()):
            yield ObjectRecord(oid, Mbr(*self.cols[:, j].tolist()), None if geoms is None else geoms[j])

    @property
    def metadata(self) -> dict[str, object]:
        t = self.transform
        return {
            "source": self.source,
            "objects": len(self),
            "original_bbox": None if self.original_bbox is None else self.original_bbox.as_tuple(),
            "aspect_ratio": self.aspect_ratio,
            "transform": {"tx": t.tx, "ty": t.ty, "dx": t.dx, "dy": t.dy},
        }


def _normalizer(cols: np.ndarray) -> tuple[Mbr | None, Transform]:
    if cols.shape[1] == 0:
        return None, Transform()
    bbox = Mbr(float(cols[0].min()), float(cols[1].min()), float(cols[2].max()), float(cols[3].max()))
    if bbox.xlo >= 0 and bbox.ylo >= 0 and bbox.xhi <= 1 and bbox.yhi <= 1:
        return bbox, Transform()
    dx = bbox.xhi - bbox.xlo or 1.0
    dy = bbox.yhi - bbox.ylo or 1.0
    return bbox, Transform(bbox.xlo, bbox.ylo, dx, dy)


def _finish(ids: list[int], rows: list, geoms: list[Geometry] | None, source: str, lines: list[int]) -> Dataset:
    id_arr = np.asarray(ids, dtype=np.int64)
    cols = np.asarray(rows, dtype=np.float64).reshape(-1, 4).T.copy()
    uniq, first = np.unique(id_arr, return_index=True)
    if len(uniq) != len(id_arr):
        dup = np.setdiff1d(np.arange(len(id_arr)), first)[0]
        raise DatasetFormatError(f"{source}:{lines[dup]}: duplicate id {id_arr[dup]}")
    bbox, t = _normalizer(cols)
    if not t.identity:
        cols = np.vstack([t.apply_x(cols[0]), t.apply_y(cols[1]), t.apply_x(cols[2]), t.apply_y(cols[3])])
        np.clip(cols, 0.0, 1.0, out=cols)
        if geoms is not None:
            geoms = [_transform_geometry(g, t) for g in geoms]
            # recompute so that stored MBRs equal the transformed geometries' MBRs exactly
            cols = np.array([g.mbr.as_tuple() for g in geoms], dtype=np.float64).reshape(-1, 4).T.copy()
    return Dataset(id_arr, cols, geoms, source, bbox, t)


def _transform_geometry(g: Geometry, t: Transform) -> Geometry:
    v = g.vertices
    out = np.column_stack((np.clip(t.apply_x(v[:, 0]), 0, 1), np.clip(t.apply_y(v[:, 1]), 0, 1)))
    return Geometry(g.kind, out)


def read_mbr_csv(path: str | Path) -> Dataset:
    """Parse ``id,xlo,ylo,xhi,yhi`` rows; a first row that is not numeric is taken as header."""
    ids: list[int] = []
    rows: list[tuple[float, float, float, float]] = []
    lines: list[int] = []
    with open(path, encoding="utf-8") as fh:
        for no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            parts = [p.strip() for p in line.split(",")]
            try:
                if len(parts) != 5:
                    raise ValueError(f"expected 5 fields, got {len(parts)}")
                oid = int(parts[0])
                box = tuple(float(p) for p in parts[1:])
            except ValueError as e:
                if no == 1 and not ids and parts[0].lower() == "id":
                    continue
                raise DatasetFormatError(f"{path}:{no}: {e}") from None
            if not all(np.isfinite(box)):
                raise DatasetFormatError(f"{path}:{no}: non-finite coordinate")
            if box[0] > box[2] or box[1] > box[3]:
                raise DatasetFormatError(f"{path}:{no}: lo > hi in {box}")
            ids.append(oid)
            rows.append(box)
            lines.append(no)
    return _finish(ids, rows, None, str(path), lines)


def parse_wkt(text: str) -> Geometry:
    """One POLYGON (single ring) or LINESTRING from WKT."""
    try:
        shp = shapely.wkt.loads(text)
    except (ShapelyError, ValueError) as e:
        raise ValueError(f"invalid WKT: {e}") from None
    if shp.is_empty:
        raise ValueError("empty geometry")
    if shp.geom_type == "Polygon":
        if len(shp.interiors):
            raise ValueError("polygons with holes are not supported")
        if not shp.is_valid:
            raise ValueError("self-intersecting or degenerate polygon")
        return Geometry(GeometryKind.POLYGON, np.asarray(shp.exterior.coords)[:, :2])
    if shp.geom_type == "LineString":
        return Geometry(GeometryKind.LINESTRING, np.asarray(shp.coords)[:, :2])
    raise ValueError(f"unsupported geometry type {shp.geom_type}")


def read_wkt(path: str | Path) -> Dataset:
    ids: list[int] = []
    geoms: list[Geometry] = []
    lines: list[int] = []
    with open(path, encoding="utf-8") as fh:
        for no, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            oid, sep, text = line.partition("\t")
            try:
                if not sep:
                    raise ValueError("expected id<TAB>WKT")
                geoms.append(parse_wkt(text))
                ids.append(int(oid))
            except ValueError as e:
                raise DatasetFormatError(f"{path}:{no}: {e}") from None
            lines.append(no)
    rows = [g.mbr.as_tuple() for g in geoms]
    return _finish(ids, rows, geoms, str(path), lines)


def ingest(path: str | Path, fmt: str | None = None) -> Dataset:
    """Read a dataset; ``fmt`` is ``mbr-csv`` or ``wkt`` (guessed from the suffix when omitted)."""
    if fmt is None:
        fmt = "wkt" if str(path).endswith((".wkt", ".tsv")) else "mbr-csv"
    if fmt == "mbr-csv":
        return read_mbr_csv(path)
    if fmt == "wkt":
        return read_wkt(path)
    raise ValueError(f"unknown dataset format {fmt!r}")


def _wkt(g: Geometry) -> str:
    v = g.vertices
    if g.kind is GeometryKind.POLYGON:
        v = np.vstack([v, v[:1]])
        return "POLYGON ((" + ", ".join(f"{x!r} {y!r}" for x, y in v.tolist()) + "))"
    return "LINESTRING (" + ", ".join(f"{x!r} {y!r}" for x, y in v.tolist()) + ")"


def write_dataset(ds: Dataset, path: str | Path, fmt: str | None = None) -> None:
    """Write the (normalized) dataset; floats use shortest round-trip repr."""
    if fmt is None:
        fmt = "wkt" if ds.geometries is not None else "mbr-csv"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if fmt == "wkt":
            if ds.geometries is None:
                raise ValueError("dataset has no geometries to write as WKT")
            for oid, g in zip(ds.ids.tolist(), ds.geometries):
                fh.write(f"{oid}\t{_wkt(g)}\n")
        elif fmt == "mbr-csv":
            fh.write("id,xlo,ylo,xhi,yhi\n")
            for oid, box in zip(ds.ids.tolist(), ds.cols.T.tolist()):
                fh.write(f"{oid},{box[0]!r},{box[1]!r},{box[2]!r},{box[3]!r}\n")
        else:
            raise ValueError(f"unknown dataset format {fmt!r}")


def dataset_from_arrays(ids: np.ndarray, cols: np.ndarray, geometries: list[Geometry] | None = None) -> Dataset:
    return Dataset(np.asarray(ids, dtype=np.int64), np.asarray(cols, dtype=np.float64), geometries, "<memory>")


__all__ = [
    "Dataset",
    "DatasetFormatError",
    "Transform",
    "dataset_from_arrays",
    "ingest",
    "parse_wkt",
    "read_mbr_csv",
    "read_wkt",
    "write_dataset",
]
