"""Geometric primitives: points, rectangles, disks, exact geometries and predicates.

All intersection predicates are closed: touching counts. Distance predicates
compare squared distances so that every module (index, queries, oracles)
agrees bit-for-bit on boundary cases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

import numpy as np


class Point(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True, slots=True)
class Mbr:
    """Axis-aligned rectangle ``[xlo, xhi] x [ylo, yhi]``.

    Zero-extent rectangles are legal and represent points or segments.
    """

    xlo: float
    ylo: float
    xhi: float
    yhi: float

    def __post_init__(self) -> None:
        vals = (self.xlo, self.ylo, self.xhi, self.yhi)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite MBR coordinate in {vals}")
        if self.xlo > self.xhi or self.ylo > self.yhi:
            raise ValueError(f"inverted MBR {vals}")

    @property
    def lo(self) -> Point:
        return Point(self.xlo, self.ylo)

    @property
    def hi(self) -> Point:
        return Point(self.xhi, self.yhi)

    def interval(self, dim: int) -> tuple[float, float]:
        """Projection on axis ``dim`` as ``(start, end)``."""
        return (self.xlo, self.xhi) if dim == 0 else (self.ylo, self.yhi)

    @property
    def area(self) -> float:
        return (self.xhi - self.xlo) * (self.yhi - self.ylo)

    def corners(self) -> tuple[Point, Point, Point, Point]:
        return (
            Point(self.xlo, self.ylo),
            Point(self.xhi, self.ylo),
            Point(self.xhi, self.yhi),
            Point(self.xlo, self.yhi),
        )

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.xlo, self.ylo, self.xhi, self.yhi)

    @classmethod
    def from_points(cls, pts) -> Mbr:
        arr = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
        lo = arr.min(axis=0)
        hi = arr.max(axis=0)
        return cls(float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]))


@dataclass(frozen=True, slots=True)
class Disk:
    center: Point
    radius: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.radius) and self.radius >= 0):
            raise ValueError(f"disk radius must be finite and >= 0, got {self.radius}")
        object.__setattr__(self, "center", Point(float(self.center[0]), float(self.center[1])))

    @property
    def mbr(self) -> Mbr:
        cx, cy = self.center
        r = self.radius
        return Mbr(cx - r, cy - r, cx + r, cy + r)


class GeometryKind(str, Enum):
    POLYGON = "polygon"
    LINESTRING = "linestring"


@dataclass(frozen=True)
class Geometry:
    """Exact shape of an object: a single vertex chain.

    Polygons are implicitly closed (the last vertex is not repeated) and are
    interpreted with the even-odd rule. Holes and multi-part shapes are not
    representable.
    """

    kind: GeometryKind
    vertices: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        kind = GeometryKind(self.kind)
        object.__setattr__(self, "kind", kind)
        v = np.array(self.vertices, dtype=np.float64).reshape(-1, 2)
        if kind is GeometryKind.POLYGON and len(v) > 1 and np.array_equal(v[0], v[-1]):
            v = v[:-1]
        need = 3 if kind is GeometryKind.POLYGON else 2
        if len(v) < need:
            raise ValueError(f"{kind.value} needs at least {need} vertices, got {len(v)}")
        if not np.isfinite(v).all():
            raise ValueError("non-finite vertex coordinate")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    @property
    def mbr(self) -> Mbr:
        return Mbr.from_points(self.vertices)

    def segments(self) -> tuple[np.ndarray, np.ndarray]:
        """Start and end points of every edge, closing edge included for polygons."""
        v = self.vertices
        if self.kind is GeometryKind.POLYGON:
            return v, np.roll(v, -1, axis=0)
        return v[:-1], v[1:]

    def transformed(self, sx: float, sy: float, tx: float, ty: float) -> Geometry:
        v = self.vertices
        out = np.column_stack(((v[:, 0] - tx) * sx, (v[:, 1] - ty) * sy))
        return Geometry(self.kind, out)


# --- rectangle predicates -------------------------------------------------


def mbr_intersects(a: Mbr, b: Mbr) -> bool:
    return a.xlo <= b.xhi and b.xlo <= a.xhi and a.ylo <= b.yhi and b.ylo <= a.yhi


def _axis_gap(v: float, lo: float, hi: float) -> float:
    if v < lo:
        return lo - v
    if v > hi:
        return v - hi
    return 0.0


def mindist2_point_mbr(q: Point, r: Mbr) -> float:
    dx = _axis_gap(q[0], r.xlo, r.xhi)
    dy = _axis_gap(q[1], r.ylo, r.yhi)
    return dx * dx + dy * dy


def maxdist2_point_mbr(q: Point, r: Mbr) -> float:
    dx = max(abs(q[0] - r.xlo), abs(q[0] - r.xhi))
    dy = max(abs(q[1] - r.ylo), abs(q[1] - r.yhi))
    return dx * dx + dy * dy


def mindist_point_mbr(q: Point, r: Mbr) -> float:
    """Distance from ``q`` to the nearest point of ``r``; 0 when inside or on it."""
    return math.sqrt(mindist2_point_mbr(q, r))


def maxdist_point_mbr(q: Point, r: Mbr) -> float:
    """Distance from ``q`` to the farthest corner of ``r``."""
    return math.sqrt(maxdist2_point_mbr(q, r))


def disk_intersects_mbr(d: Disk, r: Mbr) -> bool:
    return mindist2_point_mbr(d.center, r) <= d.radius * d.radius


# vectorized forms over (4, n) column arrays in xlo, ylo, xhi, yhi row order


def boxes_mindist2(cols: np.ndarray, qx: float, qy: float) -> np.ndarray:
    dx = np.maximum(np.maximum(cols[0] - qx, qx - cols[2]), 0.0)
    dy = np.maximum(np.maximum(cols[1] - qy, qy - cols[3]), 0.0)
    return dx * dx + dy * dy


def boxes_intersect(cols: np.ndarray, w: Mbr) -> np.ndarray:
    return (cols[0] <= w.xhi) & (cols[2] >= w.xlo) & (cols[1] <= w.yhi) & (cols[3] >= w.ylo)


# --- exact geometry predicates --------------------------------------------


def _point_in_polygon(px: float, py: float, verts: np.ndarray) -> bool:
    """Even-odd rule; boundary points are not guaranteed either way."""
    x0 = verts[:, 0]
    y0 = verts[:, 1]
    x1 = np.roll(x0, -1)
    y1 = np.roll(y0, -1)
    straddle = (y0 > py) != (y1 > py)
    if not straddle.any():
        return False
    x0, y0, x1, y1 = x0[straddle], y0[straddle], x1[straddle], y1[straddle]
    xcross = x0 + (py - y0) * (x1 - x0) / (y1 - y0)
    return bool(np.count_nonzero(px < xcross) & 1)


def _segments_hit_rect(a: np.ndarray, b: np.ndarray, w: Mbr) -> bool:
    """Separating-axis test of closed segments against a closed rectangle."""
    sxlo = np.minimum(a[:, 0], b[:, 0])
    sxhi = np.maximum(a[:, 0], b[:, 0])
    sylo = np.minimum(a[:, 1], b[:, 1])
    syhi = np.maximum(a[:, 1], b[:, 1])
    box_ok = (sxlo <= w.xhi) & (sxhi >= w.xlo) & (sylo <= w.yhi) & (syhi >= w.ylo)
    if not box_ok.any():
        return False
    a = a[box_ok]
    b = b[box_ok]
    ex = b[:, 0] - a[:, 0]
    ey = b[:, 1] - a[:, 1]
    # side of each rectangle corner relative to the segment's supporting line
    sides = [ex * (cy - a[:, 1]) - ey * (cx - a[:, 0]) for cx, cy in w.corners()]
    s = np.stack(sides)
    separated = (s > 0).all(axis=0) | (s < 0).all(axis=0)
    return bool((~separated).any())


def geometry_intersects_mbr(g: Geometry, w: Mbr) -> bool:
    """True iff the geometry (boundary chain, plus interior for polygons) meets ``w``."""
    if not mbr_intersects(g.mbr, w):
        return False
    v = g.vertices
    inside = (v[:, 0] >= w.xlo) & (v[:, 0] <= w.xhi) & (v[:, 1] >= w.ylo) & (v[:, 1] <= w.yhi)
    if inside.any():
        return True
    a, b = g.segments()
    if _segments_hit_rect(a, b, w):
        return True
    # no edge touches w, so w is either wholly inside the polygon or wholly outside
    return g.kind is GeometryKind.POLYGON and _point_in_polygon(w.xlo, w.ylo, v)


def _segments_dist2(a: np.ndarray, b: np.ndarray, qx: float, qy: float) -> np.ndarray:
    ex = b[:, 0] - a[:, 0]
    ey = b[:, 1] - a[:, 1]
    len2 = ex * ex + ey * ey
    with np.errstate(invalid="ignore", divide="ignore"):
        t = ((qx - a[:, 0]) * ex + (qy - a[:, 1]) * ey) / len2
    t = np.where(len2 > 0, np.clip(t, 0.0, 1.0), 0.0)
    dx = a[:, 0] + t * ex - qx
    dy = a[:, 1] + t * ey - qy
    return dx * dx + dy * dy


def geometry_intersects_disk(g: Geometry, d: Disk) -> bool:
    qx, qy = d.center
    r2 = d.radius * d.radius
    if mindist2_point_mbr(d.center, g.mbr) > r2:
        return False
    if g.kind is GeometryKind.POLYGON and _point_in_polygon(qx, qy, g.vertices):
        return True
    a, b = g.segments()
    return bool((_segments_dist2(a, b, qx, qy) <= r2).any())


def _orient(ax, ay, bx, by, cx, cy):
    return np.sign((bx - ax) * (cy - ay) - (by - ay) * (cx - ax))


def _on_segment(ax, ay, bx, by, cx, cy):
    """``c`` within the bounding box of ``ab`` (used for collinear triples)."""
    return (
        (np.minimum(ax, bx) <= cx) & (cx <= np.maximum(ax, bx)) & (np.minimum(ay, by) <= cy) & (cy <= np.maximum(ay, by))
    )


def _segment_sets_cross(a: np.ndarray, b: np.ndarray, c: np.ndarray, d: np.ndarray) -> bool:
    """Whether any closed segment ``a[i]b[i]`` meets any closed segment ``c[j]d[j]``."""
    ax, ay = a[:, 0][:, None], a[:, 1][:, None]
    bx, by = b[:, 0][:, None], b[:, 1][:, None]
    cx, cy = c[:, 0][None, :], c[:, 1][None, :]
    dx, dy = d[:, 0][None, :], d[:, 1][None, :]
    o1 = _orient(ax, ay, bx, by, cx, cy)
    o2 = _orient(ax, ay, bx, by, dx, dy)
    o3 = _orient(cx, cy, dx, dy, ax, ay)
    o4 = _orient(cx, cy, dx, dy, bx, by)
    hit = (o1 != o2) & (o3 != o4) & (o1 * o2 <= 0) & (o3 * o4 <= 0)
    hit |= (o1 == 0) & _on_segment(ax, ay, bx, by, cx, cy)
    hit |= (o2 == 0) & _on_segment(ax, ay, bx, by, dx, dy)
    hit |= (o3 == 0) & _on_segment(cx, cy, dx, dy, ax, ay)
    hit |= (o4 == 0) & _on_segment(cx, cy, dx, dy, bx, by)
    return bool(hit.any())


def geometry_intersects_geometry(g: Geometry, h: Geometry) -> bool:
    """Exact intersection of two geometries (used to refine join pairs)."""
    if not mbr_intersects(g.mbr, h.mbr):
        return False
    if _segment_sets_cross(*g.segments(), *h.segments()):
        return True
    # no boundary contact: one is inside the other or they are disjoint
    if g.kind is GeometryKind.POLYGON and _point_in_polygon(*h.vertices[0], g.vertices):
        return True
    return h.kind is GeometryKind.POLYGON and _point_in_polygon(*g.vertices[0], h.vertices)


# --- convex polygons (query ranges) ---------------------------------------


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


class ConvexPolygon:
    """Convex query range with counter-clockwise vertices."""

    __slots__ = ("vertices", "normals", "offsets", "mbr")

    def __init__(self, vertices) -> None:
        v = np.array(vertices, dtype=np.float64).reshape(-1, 2)
        if len(v) > 1 and np.array_equal(v[0], v[-1]):
            v = v[:-1]
        if len(v) < 3:
            raise ValueError("convex polygon needs at least 3 vertices")
        n = len(v)
        turns = [_cross(v[i], v[(i + 1) % n], v[(i + 2) % n]) for i in range(n)]
        if any(t < 0 for t in turns) or not any(t > 0 for t in turns):
            raise ValueError("polygon is not convex and counter-clockwise")
        # winding number must be 1, which rejects star polygons with only left turns
        angle = 0.0
        for i in range(n):
            e0 = v[(i + 1) % n] - v[i]
            e1 = v[(i + 2) % n] - v[(i + 1) % n]
            angle += math.atan2(e0[0] * e1[1] - e0[1] * e1[0], e0 @ e1)
        if abs(angle - 2 * math.pi) > 1e-6:
            raise ValueError("polygon is not simple and convex")
        v.setflags(write=False)
        self.vertices = v
        e = np.roll(v, -1, axis=0) - v
        # outward normals of a CCW polygon
        self.normals = np.column_stack((e[:, 1], -e[:, 0]))
        self.offsets = (self.normals * v).sum(axis=1)
        self.mbr = Mbr.from_points(v)

    def contains_points(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
        proj = pts @ self.normals.T
        return (proj <= self.offsets).all(axis=1)

    def intersects_boxes(self, cols: np.ndarray) -> np.ndarray:
        """Separating-axis test of every box against the polygon (closed)."""
        m = self.mbr
        ok = (cols[0] <= m.xhi) & (cols[2] >= m.xlo) & (cols[1] <= m.yhi) & (cols[3] >= m.ylo)
        for (nx, ny), off in zip(self.normals.tolist(), self.offsets.tolist()):
            # smallest projection of the box onto the outward normal
            px = cols[0] if nx >= 0 else cols[2]
            py = cols[1] if ny >= 0 else cols[3]
            ok &= nx * px + ny * py <= off
        return ok

    def intersects_mbr(self, r: Mbr) -> bool:
        return bool(self.intersects_boxes(np.array(r.as_tuple()).reshape(4, 1))[0])

    def contains_mbr(self, r: Mbr) -> bool:
        return bool(self.contains_points(np.array(r.corners())).all())

    def x_range_in_strip(self, ylo: float, yhi: float) -> tuple[float, float] | None:
        """x-extent of the polygon clipped to the closed strip ``ylo <= y <= yhi``."""
        v = self.vertices
        xs = []
        n = len(v)
        for i in range(n):
            x0, y0 = v[i]
            x1, y1 = v[(i + 1) % n]
            if ylo <= y0 <= yhi:
                xs.append(x0)
            for yc in (ylo, yhi):
                if (y0 - yc) * (y1 - yc) < 0:
                    xs.append(x0 + (yc - y0) * (x1 - x0) / (y1 - y0))
        if not xs:
            return None
        return min(xs), max(xs)
