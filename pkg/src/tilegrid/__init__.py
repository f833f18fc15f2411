"""Two-level uniform grid spatial index with duplicate-free range, join and kNN queries."""

from .batch import BatchResult, batch_queries_based, batch_tiles_based, run_batch
from .geometry import ConvexPolygon, Disk, Geometry, GeometryKind, Mbr, Point
from .grid import ClassId, GridConfig, TileId, TileRange, class_of, tile_extent, tile_of_point, tiles_intersecting_mbr
from .index import GridIndex, GridIndexError, ObjectRecord, Variant, build, insert, replication_ratio
from .join import ClassPairMatrix, skip_audit, spatial_join, tile_join
from .knn import KnnPlan, knn_plan, knn_query
from .range_query import (
    Mode,
    QueryStats,
    TileTask,
    convex_range_query,
    disk_query,
    plan_disk,
    plan_window,
    window_query,
    window_query_onelevel,
)
from .refinement import (
    RefinementMode,
    query_with_refinement,
    refine,
    refine_avoid_disk,
    refine_avoid_window,
    refine_avoid_window_fast,
)

__all__ = [
    "BatchResult",
    "ClassId",
    "ClassPairMatrix",
    "ConvexPolygon",
    "Disk",
    "Geometry",
    "GeometryKind",
    "GridConfig",
    "GridIndex",
    "GridIndexError",
    "KnnPlan",
    "Mbr",
    "Mode",
    "ObjectRecord",
    "Point",
    "QueryStats",
    "RefinementMode",
    "TileId",
    "TileRange",
    "TileTask",
    "Variant",
    "batch_queries_based",
    "batch_tiles_based",
    "build",
    "class_of",
    "convex_range_query",
    "disk_query",
    "insert",
    "knn_plan",
    "knn_query",
    "plan_disk",
    "plan_window",
    "query_with_refinement",
    "refine",
    "refine_avoid_disk",
    "refine_avoid_window",
    "refine_avoid_window_fast",
    "replication_ratio",
    "run_batch",
    "skip_audit",
    "spatial_join",
    "tile_extent",
    "tile_join",
    "tile_of_point",
    "tiles_intersecting_mbr",
    "window_query",
    "window_query_onelevel",
]
