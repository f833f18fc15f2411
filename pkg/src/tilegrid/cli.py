"""Command-line interface: ``tilegrid <subcommand>``.

Datasets are given as a file path (``.csv`` MBR rows or ``.wkt`` lines) or
as a generator spec ``uniform:N[:seed]``, ``clustered:N[:seed]`` or
``geometries:N[:seed]``. Exit status is 0 on success, 1 when an ``--oracle``
check finds a mismatch and 2 for usage or input errors.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import os
import statistics
import sys
import time
from pathlib import Path

import numpy as np

from . import oracle
from .batch import run_batch
from .geometry import Disk, Point, boxes_mindist2, geometry_intersects_geometry
from .grid import GridConfig
from .index import GridIndex, GridIndexError, Variant
from .io import Dataset, DatasetFormatError, dataset_from_arrays, ingest, write_dataset
from .join import skip_audit, spatial_join
from .knn import knn_query_with_distances
from .range_query import QueryStats, disk_query, window_query
from .refinement import RefinementMode, query_with_refinement
from .workload import (
    KnnQuery,
    Workload,
    clustered_rects,
    gen_workload,
    geometry_cols,
    random_geometries,
    read_workload,
    uniform_rects,
    write_workload,
)

BENCH_COLUMNS = [
    "variant",
    "grid",
    "kind",
    "extent",
    "mode",
    "queries",
    "avg-query-us",
    "comparisons",
    "candidates",
    "results",
    "refinements-run",
    "refinements-avoided",
    "replication",
    "index-bytes",
    "build-s",
]


class CliError(Exception):
    """Usage or input problem; reported on stderr with exit status 2."""


# --- helpers -------------------------------------------------------------------


def load_dataset(spec: str, fmt: str | None = None, mean_extent: float = 0.001) -> Dataset:
    kind, _, rest = spec.partition(":")
    if kind in ("uniform", "clustered", "geometries") and rest and not Path(spec).exists():
        parts = rest.split(":")
        try:
            n = int(parts[0])
            seed = int(parts[1]) if len(parts) > 1 else 0
        except ValueError:
            raise CliError(f"bad generator spec {spec!r}; expected {kind}:N[:seed]") from None
        if kind == "uniform":
            return dataset_from_arrays(*uniform_rects(n, seed, mean_extent))
        if kind == "clustered":
            return dataset_from_arrays(*clustered_rects(n, seed, mean_extent))
        geoms = random_geometries(n, seed, size=max(mean_extent * 10, 1e-4))
        return dataset_from_arrays(np.arange(n, dtype=np.int64), geometry_cols(geoms), geoms)
    try:
        return ingest(spec, fmt)
    except FileNotFoundError:
        raise CliError(f"dataset not found: {spec}") from None


def build_index(ds: Dataset, grid: int, variant: str, presort: bool = False) -> tuple[GridIndex, float]:
    t0 = time.perf_counter()
    idx = GridIndex.from_arrays(GridConfig.square(grid), variant, ds.ids, ds.cols, ds.geometries, presort=presort)
    return idx, time.perf_counter() - t0


def _default_threads() -> int:
    raw = os.environ.get("TILEGRID_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise CliError(f"TILEGRID_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise CliError("TILEGRID_THREADS must be positive")
    return n


def _open_out(path: str | None):
    if path and path != "-":
        return open(path, "w", encoding="utf-8")
    return contextlib.nullcontext(sys.stdout)


def _emit_results(out, results: list[np.ndarray]) -> None:
    for qi, ids in enumerate(results):
        out.write(f"{qi}\t{len(ids)}\t{' '.join(map(str, np.sort(ids).tolist()))}\n")


def _add_index_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--grid", type=int, default=128, help="tiles per dimension (default 128)")
    p.add_argument("--variant", choices=[v.value for v in Variant], default="2level")
    p.add_argument("--presort", action="store_true", help="keep class tables sorted by xlo")
    p.add_argument("--format", choices=["mbr-csv", "wkt"], default=None, help="dataset format (default: by suffix)")


# --- subcommands ---------------------------------------------------------------


def cmd_ingest(a) -> int:
    ds = load_dataset(a.data, a.format)
    write_dataset(ds, a.out, a.out_format)
    print(json.dumps(ds.metadata))
    return 0


def cmd_gen_data(a) -> int:
    ds = load_dataset(f"{a.kind}:{a.n}:{a.seed}", mean_extent=a.mean_extent)
    write_dataset(ds, a.out)
    print(json.dumps({"objects": len(ds), "out": a.out}))
    return 0


def cmd_gen_workload(a) -> int:
    obj_cols = None
    if a.nonempty:
        if not a.data:
            raise CliError("--nonempty needs --data")
        obj_cols = load_dataset(a.data, a.format).cols
    wl = gen_workload(a.seed, a.kind, a.count, a.extent, a.k, a.nonempty, obj_cols)
    write_workload(wl, a.out)
    return 0


def cmd_build(a) -> int:
    ds = load_dataset(a.data, a.format)
    idx, secs = build_index(ds, a.grid, a.variant, a.presort)
    print(
        json.dumps(
            {
                "variant": a.variant,
                "grid": a.grid,
                "objects": idx.num_objects,
                "entries": idx.num_entries,
                "replication": round(idx.replication_ratio(), 6),
                "index_bytes": idx.nbytes,
                "build_s": round(secs, 6),
            }
        )
    )
    return 0


def _run_queries(idx: GridIndex, wl: Workload, mode: str, stats: QueryStats) -> list[np.ndarray]:
    out = []
    for q in wl.queries:
        if isinstance(q, KnnQuery):
            out.append(knn_query_with_distances(idx, q.point, q.k, stats=stats)[0])
        elif mode == "filter":
            out.append(disk_query(idx, q, stats) if isinstance(q, Disk) else window_query(idx, q, stats))
        else:
            out.append(query_with_refinement(idx, q, mode, stats))
    return out


def _oracle_answer(ds: Dataset, q, mode: str) -> np.ndarray:
    if isinstance(q, KnnQuery):
        return oracle.knn_oracle(ds.ids, ds.cols, q.point, q.k)[0]
    if mode != "filter":
        return oracle.refined_oracle(ds.ids, ds.geometries, q)
    if isinstance(q, Disk):
        return oracle.disk_oracle(ds.ids, ds.cols, q)
    return oracle.window_oracle(ds.ids, ds.cols, q)


def _check_oracle(ds: Dataset, wl: Workload, results: list[np.ndarray], mode: str) -> int:
    bad = 0
    for qi, (q, got) in enumerate(zip(wl.queries, results)):
        want = _oracle_answer(ds, q, mode)
        if isinstance(q, KnnQuery):
            # compare distances: ids may legitimately differ only within exact ties
            ok = len(got) == len(want) and np.array_equal(_knn_dists(ds, got, q), _knn_dists(ds, want, q))
        else:
            ok = len(got) == len(np.unique(got)) and np.array_equal(np.sort(got), want)
        if not ok:
            bad += 1
            print(f"oracle mismatch on query {qi}: got {len(got)} ids, expected {len(want)}", file=sys.stderr)
    print(json.dumps({"oracle_checked": len(results), "oracle_mismatches": bad}), file=sys.stderr)
    return 1 if bad else 0


def _rows(ds: Dataset, ids: np.ndarray) -> np.ndarray:
    order = np.argsort(ds.ids)
    return order[np.searchsorted(ds.ids, ids, sorter=order)]


def _knn_dists(ds: Dataset, ids: np.ndarray, q: KnnQuery) -> np.ndarray:
    return np.sort(boxes_mindist2(ds.cols[:, _rows(ds, ids)], q.point[0], q.point[1]))


def _validate_mode(mode: str, wl: Workload, ds: Dataset) -> None:
    if mode == "refavoid+" and any(isinstance(q, Disk) for q in wl.queries):
        raise CliError("--mode refavoid+ applies to window queries only; the workload contains disk queries")
    if mode != "filter" and ds.geometries is None:
        raise CliError(f"--mode {mode} needs a dataset with geometries (WKT); this dataset is MBR-only")


def cmd_query(a) -> int:
    ds = load_dataset(a.data, a.format)
    wl = read_workload(a.workload)
    _validate_mode(a.mode, wl, ds)
    idx, _ = build_index(ds, a.grid, a.variant, a.presort)
    stats = QueryStats()
    t0 = time.perf_counter()
    results = _run_queries(idx, wl, a.mode, stats)
    secs = time.perf_counter() - t0
    with _open_out(a.out) as out:
        _emit_results(out, results)
    summary = {"queries": len(results), "seconds": round(secs, 6), "mode": a.mode, **stats.as_dict()}
    print(json.dumps(summary), file=sys.stderr)
    return _check_oracle(ds, wl, results, a.mode) if a.oracle else 0


def cmd_batch(a) -> int:
    ds = load_dataset(a.data, a.format)
    wl = read_workload(a.workload)
    if any(isinstance(q, KnnQuery) for q in wl.queries):
        raise CliError("batch evaluation covers window and disk queries only")
    idx, _ = build_index(ds, a.grid, a.variant, a.presort)
    threads = a.threads if a.threads is not None else _default_threads()
    res = run_batch(idx, wl.queries, a.strategy, threads, a.executor)
    with _open_out(a.out) as out:
        _emit_results(out, res.results)
    summary = {
        "strategy": a.strategy,
        "threads": threads,
        "queries": len(res),
        "subtasks": res.subtasks,
        **{f"{k}_s": round(v, 6) for k, v in res.timings.items()},
        **res.stats.as_dict(),
    }
    print(json.dumps(summary), file=sys.stderr)
    return _check_oracle(ds, wl, res.results, "filter") if a.oracle else 0


def cmd_join(a) -> int:
    if a.variant == Variant.ONE_LEVEL.value:
        raise CliError("join needs --variant 2level or 2level+ (classes drive duplicate avoidance)")
    grid_s = a.grid_s if a.grid_s is not None else a.grid
    if grid_s != a.grid:
        raise CliError(f"join needs equal grids, got --grid {a.grid} and --grid-s {grid_s}")
    dr = load_dataset(a.data_r, a.format)
    ds = load_dataset(a.data_s, a.format)
    ir, _ = build_index(dr, a.grid, a.variant, a.presort)
    is_, _ = build_index(ds, grid_s, a.variant, a.presort)
    threads = a.threads if a.threads is not None else _default_threads()
    t0 = time.perf_counter()
    r_ids, s_ids = spatial_join(ir, is_, threads, a.executor)
    secs = time.perf_counter() - t0
    pairs = sorted(zip(r_ids.tolist(), s_ids.tolist()))
    summary = {"filter_pairs": len(pairs), "seconds": round(secs, 6), "threads": threads}
    if a.refine:
        if dr.geometries is None or ds.geometries is None:
            raise CliError("--refine needs geometries in both datasets")
        pairs = [(r, s) for r, s in pairs if geometry_intersects_geometry(ir.store.geometry(r), is_.store.geometry(s))]
        summary["refined_pairs"] = len(pairs)
    with _open_out(a.out) as out:
        for r, s in pairs:
            out.write(f"{r}\t{s}\n")
    status = 0
    if a.audit:
        audit = skip_audit(ir, is_)
        summary["skip_audit"] = {"skipped_emissions": audit.skipped_emissions, "missing": audit.missing}
        status |= 0 if audit.ok else 1
    if a.oracle:
        want = oracle.join_oracle(dr.ids, dr.cols, ds.ids, ds.cols)
        got = list(zip(r_ids.tolist(), s_ids.tolist()))
        ok = len(got) == len(set(got)) and set(got) == want
        summary["oracle_ok"] = ok
        status |= 0 if ok else 1
    print(json.dumps(summary), file=sys.stderr)
    return status


def cmd_knn(a) -> int:
    ds = load_dataset(a.data, a.format)
    if a.workload:
        wl = read_workload(a.workload)
        if not all(isinstance(q, KnnQuery) for q in wl.queries):
            raise CliError("knn workloads must contain only K lines")
    elif a.point:
        wl = Workload([KnnQuery(Point(*a.point), a.k)])
    else:
        raise CliError("give --point X Y or --workload FILE")
    if a.k is not None and a.workload:
        wl = Workload([KnnQuery(q.point, a.k) for q in wl.queries], wl.params)
    idx, _ = build_index(ds, a.grid, a.variant, a.presort)
    stats = QueryStats()
    try:
        results = _run_queries(idx, wl, "filter", stats)
    except ValueError as e:
        raise CliError(str(e)) from None
    with _open_out(a.out) as out:
        for qi, ids in enumerate(results):
            out.write(f"{qi}\t{len(ids)}\t{' '.join(map(str, ids.tolist()))}\n")
    print(json.dumps({"queries": len(results), **stats.as_dict()}), file=sys.stderr)
    return _check_oracle(ds, wl, results, "filter") if a.oracle else 0


def cmd_bench(a) -> int:
    ds = load_dataset(a.data, a.format)
    grids = [int(g) for g in a.grid_sweep.split(",")]
    extents = [float(e) for e in a.extent.split(",")]
    variants = a.variants.split(",")
    mode = a.mode
    if mode != "filter" and ds.geometries is None:
        raise CliError(f"--mode {mode} needs a dataset with geometries")
    if mode == "refavoid+" and a.kind == "disk":
        raise CliError("--mode refavoid+ applies to window queries only")
    rows = []
    for variant in variants:
        Variant(variant)
        for grid in grids:
            idx, build_s = build_index(ds, grid, variant, a.presort)
            for ext in extents:
                wl = gen_workload(a.seed, a.kind, a.queries, ext, nonempty=a.nonempty, object_cols=ds.cols)
                times, stats = [], QueryStats()
                for run in range(a.runs):
                    s = QueryStats()
                    t0 = time.perf_counter()
                    _run_queries(idx, wl, mode, s)
                    times.append(time.perf_counter() - t0)
                    if run == 0:
                        stats = s
                n = max(len(wl), 1)
                rows.append(
                    {
                        "variant": variant,
                        "grid": grid,
                        "kind": a.kind,
                        "extent": ext,
                        "mode": mode,
                        "queries": len(wl),
                        "avg-query-us": round(statistics.median(times) / n * 1e6, 3),
                        "comparisons": stats.comparisons,
                        "candidates": stats.candidates,
                        "results": stats.results,
                        "refinements-run": stats.refinements_run,
                        "refinements-avoided": stats.refinements_avoided,
                        "replication": round(idx.replication_ratio(), 6),
                        "index-bytes": idx.nbytes,
                        "build-s": round(build_s, 6),
                    }
                )
    with _open_out(a.out) as out:
        w = csv.DictWriter(out, fieldnames=BENCH_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return 0


# --- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tilegrid", description="Two-level uniform grid spatial index.")
    sub = p.add_subparsers(dest="cmd", required=True)

    s = sub.add_parser("ingest", help="normalize a dataset into the unit square and write it")
    s.add_argument("data")
    s.add_argument("--format", choices=["mbr-csv", "wkt"], default=None)
    s.add_argument("--out", required=True)
    s.add_argument("--out-format", choices=["mbr-csv", "wkt"], default=None)
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("gen-data", help="write a synthetic dataset")
    s.add_argument("--kind", choices=["uniform", "clustered", "geometries"], default="uniform")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--mean-extent", type=float, default=0.001, help="mean side length relative to the domain")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_gen_data)

    s = sub.add_parser("gen-workload", help="write a deterministic query workload file")
    s.add_argument("--kind", choices=["window", "disk", "knn"], default="window")
    s.add_argument("--count", type=int, default=1000)
    s.add_argument("--extent", type=float, default=0.001, help="query area / domain area (default 0.001)")
    s.add_argument("--k", type=int, default=10)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--nonempty", action="store_true", help="centre queries on data objects")
    s.add_argument("--data", help="dataset for --nonempty")
    s.add_argument("--format", choices=["mbr-csv", "wkt"], default=None)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_gen_workload)

    s = sub.add_parser("build", help="build an index and report size, time and replication")
    s.add_argument("data")
    _add_index_args(s)
    s.set_defaults(func=cmd_build)

    s = sub.add_parser("query", help="run a workload file query by query")
    s.add_argument("data")
    s.add_argument("workload")
    _add_index_args(s)
    s.add_argument(
        "--mode",
        choices=["filter"] + [m.value for m in RefinementMode],
        default="filter",
        help="filter = MBR results only; the others refine against geometries",
    )
    s.add_argument("--oracle", action="store_true", help="check every answer against a linear scan")
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_query)

    s = sub.add_parser("batch", help="evaluate a workload as one batch")
    s.add_argument("data")
    s.add_argument("workload")
    _add_index_args(s)
    s.add_argument("--strategy", choices=["queries", "tiles"], default="tiles")
    s.add_argument("--threads", type=int, default=None, help="workers (default $TILEGRID_THREADS or 1)")
    s.add_argument("--executor", choices=["process", "thread"], default="process")
    s.add_argument("--oracle", action="store_true")
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_batch)

    s = sub.add_parser("join", help="MBR intersection join of two datasets")
    s.add_argument("data_r")
    s.add_argument("data_s")
    _add_index_args(s)
    s.add_argument("--grid-s", type=int, default=None, help="grid of the second dataset (must equal --grid)")
    s.add_argument("--threads", type=int, default=None)
    s.add_argument("--executor", choices=["process", "thread"], default="process")
    s.add_argument("--refine", action="store_true", help="keep only pairs whose geometries intersect")
    s.add_argument("--audit", action="store_true", help="check that skipped class pairs lose no result")
    s.add_argument("--oracle", action="store_true")
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_join)

    s = sub.add_parser("knn", help="k nearest neighbours by MBR distance")
    s.add_argument("data")
    _add_index_args(s)
    s.add_argument("--k", type=int, default=None)
    s.add_argument("--point", type=float, nargs=2, metavar=("X", "Y"))
    s.add_argument("--workload", help="file of K lines")
    s.add_argument("--oracle", action="store_true")
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_knn)

    s = sub.add_parser(
        "bench",
        help="sweep grid sizes and query extents, writing a CSV",
        description="CSV columns, in order: " + ", ".join(BENCH_COLUMNS) + ". avg-query-us is the median over "
        "--runs of the mean per-query time; counters come from the first run. refinements-run + "
        "refinements-avoided equals candidates in refinement modes and both are 0 in filter mode.",
    )
    s.add_argument("data")
    s.add_argument("--format", choices=["mbr-csv", "wkt"], default=None)
    s.add_argument("--grid-sweep", default="64,128,256,512")
    s.add_argument("--extent", default="0.001", help="comma-separated query area ratios")
    s.add_argument("--variants", default="1level,2level,2level+")
    s.add_argument("--kind", choices=["window", "disk"], default="window")
    s.add_argument("--mode", choices=["filter"] + [m.value for m in RefinementMode], default="filter")
    s.add_argument("--queries", type=int, default=1000)
    s.add_argument("--runs", type=int, default=3)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--nonempty", action="store_true")
    s.add_argument("--presort", action="store_true")
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_bench)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, DatasetFormatError, GridIndexError) as e:
        print(f"tilegrid: error: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"tilegrid: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
