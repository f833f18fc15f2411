"""Linear-scan reference answers used by ``--oracle`` runs and the test-suite."""

from __future__ import annotations

import numpy as np

from .geometry import (
    ConvexPolygon,
    Disk,
    Geometry,
    Mbr,
    boxes_intersect,
    boxes_mindist2,
    geometry_intersects_disk,
    geometry_intersects_mbr,
)


def window_oracle(ids: np.ndarray, cols: np.ndarray, w: Mbr) -> np.ndarray:
    return np.sort(ids[boxes_intersect(cols, w)])


def disk_oracle(ids: np.ndarray, cols: np.ndarray, d: Disk) -> np.ndarray:
    return np.sort(ids[boxes_mindist2(cols, d.center[0], d.center[1]) <= d.radius * d.radius])


def convex_oracle(ids: np.ndarray, cols: np.ndarray, poly: ConvexPolygon) -> np.ndarray:
    return np.sort(ids[poly.intersects_boxes(cols)])


def knn_oracle(ids: np.ndarray, cols: np.ndarray, q, k: int) -> tuple[np.ndarray, np.ndarray]:
    """The k smallest MBR mindists (ties by id) as ``(ids, squared distances)``."""
    d2 = boxes_mindist2(cols, float(q[0]), float(q[1]))
    order = np.lexsort((ids, d2))[:k]
    return ids[order], d2[order]


def refined_oracle(ids: np.ndarray, geometries: list[Geometry], query: Mbr | Disk) -> np.ndarray:
    test = geometry_intersects_disk if isinstance(query, Disk) else geometry_intersects_mbr
    return np.sort(np.array([i for i, g in zip(ids.tolist(), geometries) if test(g, query)], dtype=np.int64))


def join_oracle(r_ids: np.ndarray, r_cols: np.ndarray, s_ids: np.ndarray, s_cols: np.ndarray, block: int = 512) -> set[tuple[int, int]]:
    """All intersecting ``(idR, idS)`` pairs by blocked nested loops."""
    out: set[tuple[int, int]] = set()
    for i in range(0, r_cols.shape[1], block):
        rc = r_cols[:, i : i + block]
        ok = (
            (rc[0][:, None] <= s_cols[2][None, :])
            & (s_cols[0][None, :] <= rc[2][:, None])
            & (rc[1][:, None] <= s_cols[3][None, :])
            & (s_cols[1][None, :] <= rc[3][:, None])
        )
        a, b = np.nonzero(ok)
        out.update(zip(r_ids[i + a].tolist(), s_ids[b].tolist()))
    return out
