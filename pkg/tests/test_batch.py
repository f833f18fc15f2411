import numpy as np
import pytest

from tilegrid.batch import batch_queries_based, batch_tiles_based, plan_subtasks, run_batch
from tilegrid.geometry import Disk, Mbr, Point
from tilegrid.grid import GridConfig
from tilegrid.index import GridIndex
from tilegrid.oracle import disk_oracle, window_oracle
from tilegrid.range_query import plan_disk, plan_window, window_query

from conftest import VARIANTS


def _mixed(n, seed):
    rng = np.random.default_rng(seed)
    out = []
    for j, c in enumerate(rng.random((n, 2)) * 0.9):
        if j % 3 == 2:
            out.append(Disk(Point(*c), 0.03))
        else:
            out.append(Mbr(c[0], c[1], c[0] + 0.06, c[1] + 0.04))
    return out


def _oracle(ids, cols, q):
    return disk_oracle(ids, cols, q) if isinstance(q, Disk) else window_oracle(ids, cols, q)


def _same(a, b):
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


@pytest.mark.parametrize("variant", VARIANTS)
@pytest.mark.parametrize("strategy", ["queries", "tiles"])
def test_oracle(variant, strategy, uniform10k, indexes10k):
    ids, cols = uniform10k
    qs = _mixed(300, seed=1)
    res = run_batch(indexes10k[variant], qs, strategy)
    assert len(res) == len(qs)
    for q, got in zip(qs, res.results):
        assert np.array_equal(got, _oracle(ids, cols, q))


def test_single_query(indexes10k):
    idx = indexes10k["2level"]
    w = Mbr(0.2, 0.2, 0.4, 0.3)
    expected = np.sort(window_query(idx, w))
    assert np.array_equal(batch_queries_based(idx, [w]).results[0], expected)
    assert np.array_equal(batch_tiles_based(idx, [w]).results[0], expected)


@pytest.mark.parametrize("executor", ["process", "thread"])
def test_thread_count_independence(executor, indexes10k):
    idx = indexes10k["2level+"]
    qs = _mixed(1000, seed=2)
    base = batch_queries_based(idx, qs).results
    for threads in (1, 2, 4):
        assert _same(batch_queries_based(idx, qs, threads, executor).results, base)
        assert _same(batch_tiles_based(idx, qs, threads, executor).results, base)


def test_shared_tile_accumulates_two_subtasks():
    idx = GridIndex.from_arrays(GridConfig(4, 4), "2level", np.array([1, 2]), np.array([[0.3, 0.6], [0.3, 0.6], [0.35, 0.7], [0.35, 0.7]]))
    qs = [Mbr(0.3, 0.3, 0.4, 0.4), Mbr(0.32, 0.32, 0.45, 0.45)]
    buckets, _ = plan_subtasks(idx, qs)
    assert len(buckets[idx.cfg.linear(1, 1)]) == 2
    res = batch_tiles_based(idx, qs)
    assert [r.tolist() for r in res.results] == [[1], [1]]


def test_work_conservation(indexes10k):
    idx = indexes10k["2level"]
    qs = _mixed(200, seed=3)
    expected = sum(len(plan_disk(idx, q).tasks) if isinstance(q, Disk) else len(plan_window(idx, q)) for q in qs)
    buckets, _ = plan_subtasks(idx, qs)
    assert sum(len(v) for v in buckets.values()) == expected
    assert batch_tiles_based(idx, qs).subtasks == expected


def test_timings_and_stats(indexes10k):
    res = batch_tiles_based(indexes10k["2level"], _mixed(50, seed=4))
    assert set(res.timings) == {"plan", "execute", "merge", "total"}
    assert res.stats.results == sum(len(r) for r in res.results)


def test_empty_batch(indexes10k):
    assert len(batch_tiles_based(indexes10k["2level"], []).results) == 0
    assert len(batch_queries_based(indexes10k["2level"], []).results) == 0


def test_bad_arguments(indexes10k):
    with pytest.raises(ValueError):
        run_batch(indexes10k["2level"], [], "bogus")
    with pytest.raises(ValueError):
        batch_tiles_based(indexes10k["2level"], [], threads=0)
