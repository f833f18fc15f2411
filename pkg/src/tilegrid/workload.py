"""Synthetic datasets and query workloads, and the workload file format.

Workload files hold one query per line::

    W xlo ylo xhi yhi
    D cx cy r
    K cx cy k

Lines starting with ``#`` carry ``key=value`` generation parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

from .geometry import Disk, Geometry, GeometryKind, Mbr, Point

UNIT = Mbr(0.0, 0.0, 1.0, 1.0)


@dataclass(frozen=True)
class KnnQuery:
    point: Point
    k: int

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError(f"k must be positive, got {self.k}")


Query = Union[Mbr, Disk, KnnQuery]


@dataclass
class Workload:
    queries: list[Query]
    params: dict[str, str] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.queries)

    def __iter__(self):
        return iter(self.queries)


# --- datasets ----------------------------------------------------------------


def uniform_rects(n: int, seed: int = 0, mean_extent: float = 0.001, domain: Mbr = UNIT) -> tuple[np.ndarray, np.ndarray]:
    """``n`` rectangles with uniform lower corners and side lengths in ``[0, 2*mean_extent]``.

    Returns ``(ids, cols)`` with cols shaped ``(4, n)``; rectangles are clipped to the domain.
    """
    rng = np.random.default_rng(seed)
    w, h = domain.xhi - domain.xlo, domain.yhi - domain.ylo
    xlo = domain.xlo + rng.random(n) * w
    ylo = domain.ylo + rng.random(n) * h
    ext = rng.random((2, n)) * (2 * mean_extent)
    cols = np.vstack([xlo, ylo, np.minimum(xlo + ext[0] * w, domain.xhi), np.minimum(ylo + ext[1] * h, domain.yhi)])
    return np.arange(n, dtype=np.int64), cols


def clustered_rects(
    n: int, seed: int = 0, mean_extent: float = 0.001, clusters: int = 20, spread: float = 0.05, domain: Mbr = UNIT
) -> tuple[np.ndarray, np.ndarray]:
    """Rectangles whose lower corners follow a mixture of Gaussians, clipped to the domain."""
    rng = np.random.default_rng(seed)
    centers = rng.random((clusters, 2))
    which = rng.integers(0, clusters, n)
    pts = centers[which] + rng.normal(0.0, spread, (n, 2))
    pts = np.clip(pts, 0.0, 1.0)
    w, h = domain.xhi - domain.xlo, domain.yhi - domain.ylo
    xlo = domain.xlo + pts[:, 0] * w
    ylo = domain.ylo + pts[:, 1] * h
    ext = rng.random((2, n)) * (2 * mean_extent)
    cols = np.vstack([xlo, ylo, np.minimum(xlo + ext[0] * w, domain.xhi), np.minimum(ylo + ext[1] * h, domain.yhi)])
    return np.arange(n, dtype=np.int64), cols


def random_geometries(n: int, seed: int = 0, size: float = 0.01, polygon_share: float = 0.5) -> list[Geometry]:
    """Random simple star-shaped polygons and random-walk linestrings inside the unit square."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        s = size * (0.2 + 1.6 * rng.random())
        c = s + rng.random(2) * (1 - 2 * s)
        if rng.random() < polygon_share:
            m = int(rng.integers(3, 12))
            # jittered even spacing keeps every angular gap below pi, so the polygon is star-shaped
            ang = (np.arange(m) + 0.9 * rng.random(m)) / m * 2 * math.pi
            rad = s * (0.3 + 0.7 * rng.random(m))
            v = np.column_stack((c[0] + rad * np.cos(ang), c[1] + rad * np.sin(ang)))
            out.append(Geometry(GeometryKind.POLYGON, np.clip(v, 0.0, 1.0)))
        else:
            m = int(rng.integers(2, 8))
            steps = rng.normal(0.0, s / 2, (m - 1, 2))
            v = np.vstack([c, c + np.cumsum(steps, axis=0)])
            out.append(Geometry(GeometryKind.LINESTRING, np.clip(v, 0.0, 1.0)))
    return out


def geometry_cols(geoms: list[Geometry]) -> np.ndarray:
    cols = np.empty((4, len(geoms)))
    for j, g in enumerate(geoms):
        cols[:, j] = g.mbr.as_tuple()
    return cols


# --- workloads -----------------------------------------------------------------


def window_side(relative_extent: float, domain: Mbr = UNIT) -> float:
    """Side of a square window whose area is ``relative_extent`` of the domain area."""
    return math.sqrt(relative_extent * domain.area)


def disk_radius(relative_extent: float, domain: Mbr = UNIT) -> float:
    """Radius of a disk whose area is ``relative_extent`` of the domain area."""
    return math.sqrt(relative_extent * domain.area / math.pi)


def _centres(rng: np.random.Generator, count: int, domain: Mbr, object_cols: np.ndarray | None) -> np.ndarray:
    if object_cols is None:
        return np.column_stack(
            (
                domain.xlo + rng.random(count) * (domain.xhi - domain.xlo),
                domain.ylo + rng.random(count) * (domain.yhi - domain.ylo),
            )
        )
    pick = rng.integers(0, object_cols.shape[1], count)
    sub = object_cols[:, pick]
    return np.column_stack(((sub[0] + sub[2]) / 2, (sub[1] + sub[3]) / 2))


def gen_workload(
    seed: int,
    kind: str,
    count: int,
    relative_extent: float = 0.001,
    k: int = 10,
    nonempty: bool = False,
    object_cols: np.ndarray | None = None,
    domain: Mbr = UNIT,
) -> Workload:
    """Deterministic queries of one kind (``window``, ``disk`` or ``knn``).

    With ``nonempty`` every query is centred on the centre of a randomly
    chosen object MBR from ``object_cols``, so it returns at least that
    object. Windows are squares kept inside the domain; disks are area-matched.
    """
    if kind not in ("window", "disk", "knn"):
        raise ValueError(f"unknown query kind {kind!r}")
    if count < 0:
        raise ValueError("count must be non-negative")
    if nonempty and (object_cols is None or object_cols.shape[1] == 0):
        raise ValueError("nonempty workloads need a non-empty dataset")
    rng = np.random.default_rng(seed)
    centres = _centres(rng, count, domain, object_cols if nonempty else None)
    params = {"seed": str(seed), "kind": kind, "count": str(count), "nonempty": str(nonempty).lower()}
    queries: list[Query] = []
    if kind == "window":
        s = window_side(relative_extent, domain)
        params.update(relative_extent=repr(relative_extent), shape="square", side=repr(s))
        for cx, cy in centres.tolist():
            xlo = min(max(cx - s / 2, domain.xlo), max(domain.xhi - s, domain.xlo))
            ylo = min(max(cy - s / 2, domain.ylo), max(domain.yhi - s, domain.ylo))
            queries.append(Mbr(xlo, ylo, xlo + s, ylo + s))
    elif kind == "disk":
        r = disk_radius(relative_extent, domain)
        params.update(relative_extent=repr(relative_extent), shape="disk", radius=repr(r))
        queries = [Disk(Point(cx, cy), r) for cx, cy in centres.tolist()]
    else:
        params["k"] = str(k)
        queries = [KnnQuery(Point(cx, cy), k) for cx, cy in centres.tolist()]
    return Workload(queries, params)


def format_query(q: Query) -> str:
    if isinstance(q, Mbr):
        return f"W {q.xlo!r} {q.ylo!r} {q.xhi!r} {q.yhi!r}"
    if isinstance(q, Disk):
        return f"D {q.center[0]!r} {q.center[1]!r} {q.radius!r}"
    return f"K {q.point[0]!r} {q.point[1]!r} {q.k}"


def write_workload(wl: Workload, path: str | Path) -> None:
    lines = [f"# {k}={v}" for k, v in wl.params.items()]
    lines += [format_query(q) for q in wl.queries]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def parse_query(line: str) -> Query:
    parts = line.split()
    tag, args = parts[0].upper(), parts[1:]
    if tag == "W" and len(args) == 4:
        return Mbr(*map(float, args))
    if tag == "D" and len(args) == 3:
        x, y, r = map(float, args)
        return Disk(Point(x, y), r)
    if tag == "K" and len(args) == 3:
        return KnnQuery(Point(float(args[0]), float(args[1])), int(args[2]))
    raise ValueError(f"bad query line {line!r}")


def read_workload(path: str | Path) -> Workload:
    wl = Workload([])
    for no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            if val:
                wl.params[key.strip()] = val.strip()
            continue
        try:
            wl.queries.append(parse_query(line))
        except ValueError as e:
            raise ValueError(f"{path}:{no}: {e}") from None
    return wl
