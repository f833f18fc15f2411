import numpy as np
import pytest

from tilegrid.grid import GridConfig
from tilegrid.index import GridIndex, Variant
from tilegrid.workload import geometry_cols, random_geometries, uniform_rects, clustered_rects

VARIANTS = [v.value for v in Variant]


def brute_window(cols, w):
    return (cols[0] <= w.xhi) & (cols[2] >= w.xlo) & (cols[1] <= w.yhi) & (cols[3] >= w.ylo)


def brute_disk(cols, d):
    qx, qy = d.center
    dx = np.maximum(np.maximum(cols[0] - qx, qx - cols[2]), 0.0)
    dy = np.maximum(np.maximum(cols[1] - qy, qy - cols[3]), 0.0)
    return dx * dx + dy * dy <= d.radius * d.radius


@pytest.fixture(scope="session")
def uniform10k():
    return uniform_rects(10_000, seed=11, mean_extent=0.004)


@pytest.fixture(scope="session")
def clustered10k():
    return clustered_rects(10_000, seed=12, mean_extent=0.004)


@pytest.fixture(scope="session")
def indexes10k(uniform10k):
    ids, cols = uniform10k
    cfg = GridConfig(40, 40)
    return {v: GridIndex.from_arrays(cfg, v, ids, cols) for v in VARIANTS}


@pytest.fixture(scope="session")
def geoms2k():
    geoms = random_geometries(2000, seed=5, size=0.01)
    return np.arange(len(geoms), dtype=np.int64), geometry_cols(geoms), geoms


@pytest.fixture(scope="session")
def geom_indexes(geoms2k):
    ids, cols, geoms = geoms2k
    cfg = GridConfig(24, 24)
    return {v: GridIndex.from_arrays(cfg, v, ids, cols, geoms) for v in VARIANTS}
