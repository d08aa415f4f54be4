"""Command line front end: gen, run, bench.

Reports go to stdout as one LF-terminated JSON document; diagnostics go
to stderr. Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from .comm import CommWorld, split_blocks
from .core import (DataSet, Partition, adjusted_rand_index, generate_blobs,
                   load_csv, write_csv)
from .dbscan import DbscanParams, DdbcParams, dbscan, ddbc
from .fcm import FcmParams, pfcm
from .kmeans import KMeansParams, kmeans_centralized, pkm
from .kwindows import KWindowsParams, k_windows
from .pca import DbscanLocal, KMeansLocal, cpca_cluster
from .pddp import pddp_km, pddp_report
from .report import ClusterReport

ALGOS = ("kmeans", "pkm", "fcm", "pfcm", "kwindows", "cpca-cluster",
         "dbscan", "ddbc", "pddp", "pddp-km")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems with exit code 1."""

    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="parclust",
                     description="Desk-scale parallel clustering toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a labeled blob dataset")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--clusters", type=int, default=3)
    gen.add_argument("--per-cluster", type=int, default=100)
    gen.add_argument("--dim", type=int, default=2)
    gen.add_argument("--spread", type=float, default=1.0)
    gen.add_argument("--separation", type=float, default=10.0)
    gen.add_argument("--out", required=True, help="data CSV path")
    gen.add_argument("--labels-out", default=None,
                     help="ground-truth labels CSV (default: <out>.labels.csv)")

    run = sub.add_parser("run", help="run one clustering algorithm")
    run.add_argument("--nodes", type=int, default=1,
                     help="simulated node count")
    _add_run_flags(run)

    bench = sub.add_parser("bench", help="run over several node counts")
    bench.add_argument("--nodes", default="1,2,4",
                       help="comma-separated node counts, e.g. 1,2,4,8")
    bench.add_argument("--baseline", default=None, choices=ALGOS,
                       help="centralized counterpart to compare against")
    _add_run_flags(bench)
    return parser


def _add_run_flags(p) -> None:
    p.add_argument("--algo", required=True, choices=ALGOS)
    p.add_argument("--data", required=True, help="input CSV")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--m", type=float, default=2.0, help="fuzzifier")
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--max-iter", type=int, default=300)
    p.add_argument("--eps", type=float, default=0.5)
    p.add_argument("--min-pts", type=int, default=5)
    p.add_argument("--eps-global", type=float, default=None,
                   help="representative eps (default: 2*eps)")
    p.add_argument("--min-pts-global", type=int, default=1)
    p.add_argument("--local-model", choices=("rep-kmeans", "rep-scor"),
                   default="rep-kmeans",
                   help="density model: refine with k-means or keep core points")
    p.add_argument("--windows", type=int, default=3, help="window count l")
    p.add_argument("--half-width", type=float, default=1.0,
                   help="initial window half-width a")
    p.add_argument("--theta-move", type=float, default=0.01)
    p.add_argument("--theta-enlarge", type=float, default=0.1)
    p.add_argument("--theta-merge", type=float, default=0.2)
    p.add_argument("--height", type=int, default=2, help="split tree height")
    p.add_argument("--variance-fraction", type=float, default=0.9)
    p.add_argument("--reps-per-cluster", type=int, default=3)
    p.add_argument("--local-algo", choices=("kmeans", "dbscan"),
                   default="kmeans", help="local clusterer for cpca-cluster")


def _tol(args, default: float) -> float:
    return default if args.tol is None else args.tol


def _run_algo(args, X: DataSet, nodes: int) -> ClusterReport:
    if nodes < 1:
        raise _UsageError("--nodes must be >= 1")
    algo = args.algo
    if algo == "kmeans":
        t0 = time.perf_counter()
        params = KMeansParams(k=args.k, max_iter=args.max_iter,
                              tol=_tol(args, 1e-9), seed=args.seed)
        centers, part, j, iters = kmeans_centralized(X, params)
        wall = (time.perf_counter() - t0) * 1e3
        return ClusterReport(
            algo="kmeans", p=1,
            params={"k": params.k, "max_iter": params.max_iter,
                    "tol": params.tol, "seed": params.seed},
            n=X.n, d=X.d, labels=part.labels, centroids=centers.centers,
            j=j, iterations=iters,
            timings_ms={"split": 0.0, "compute": wall, "comm": 0.0})
    if algo == "dbscan":
        t0 = time.perf_counter()
        part = dbscan(X, DbscanParams(eps=args.eps, min_pts=args.min_pts))
        wall = (time.perf_counter() - t0) * 1e3
        return ClusterReport(
            algo="dbscan", p=1,
            params={"eps": args.eps, "min_pts": args.min_pts},
            n=X.n, d=X.d, labels=part.labels,
            model={"k": part.k},
            timings_ms={"split": 0.0, "compute": wall, "comm": 0.0})

    world = CommWorld(nodes)
    try:
        if algo == "pkm":
            return pkm(world, X, KMeansParams(k=args.k, max_iter=args.max_iter,
                                              tol=_tol(args, 1e-9),
                                              seed=args.seed))
        if algo in ("fcm", "pfcm"):
            if algo == "fcm" and nodes != 1:
                raise _UsageError("fcm is the single-node variant; use pfcm")
            rep = pfcm(world, X, FcmParams(k=args.k, m=args.m,
                                           max_iter=args.max_iter,
                                           tol=_tol(args, 1e-9),
                                           seed=args.seed))
            rep.algo = algo
            return rep
        if algo == "kwindows":
            return k_windows(world, X, KWindowsParams(
                l=args.windows, a=args.half_width,
                theta_move=args.theta_move, theta_enlarge=args.theta_enlarge,
                theta_merge=args.theta_merge, seed=args.seed))
        if algo == "cpca-cluster":
            if args.local_algo == "kmeans":
                local = KMeansLocal(seed=args.seed, max_iter=args.max_iter)
            else:
                local = DbscanLocal(eps=args.eps, min_pts=args.min_pts)
            t0 = time.perf_counter()
            shards = split_blocks(X, nodes)
            split_ms = (time.perf_counter() - t0) * 1e3
            rep = cpca_cluster(world, shards, local, args.k,
                               reps_per_cluster=args.reps_per_cluster,
                               variance_fraction=args.variance_fraction,
                               seed=args.seed)
            rep.timings_ms["split"] = split_ms
            return rep
        if algo == "ddbc":
            t0 = time.perf_counter()
            shards = split_blocks(X, nodes)
            split_ms = (time.perf_counter() - t0) * 1e3
            params = DdbcParams(
                local=DbscanParams(eps=args.eps, min_pts=args.min_pts),
                eps_global=args.eps_global,
                min_pts_global=args.min_pts_global,
                refine_model=args.local_model == "rep-kmeans")
            rep = ddbc(world, shards, params)
            rep.timings_ms["split"] = split_ms
            return rep
        if algo == "pddp":
            return pddp_report(world, X, args.height, tol=_tol(args, 1e-10))
        if algo == "pddp-km":
            return pddp_km(world, X, args.height, max_iter=args.max_iter,
                           tol=_tol(args, 1e-9))
        raise _UsageError("unknown algorithm %r" % algo)
    finally:
        world.shutdown()


def _cmd_gen(args) -> int:
    X, truth = generate_blobs(args.seed, args.clusters, args.per_cluster,
                              args.dim, spread=args.spread,
                              separation=args.separation)
    write_csv(X, args.out)
    labels_path = args.labels_out or args.out + ".labels.csv"
    with open(labels_path, "w", encoding="utf-8") as fh:
        for v in truth.labels:
            fh.write("%d\n" % v)
    print("wrote %d x %d points to %s and labels to %s"
          % (X.n, X.d, args.out, labels_path), file=sys.stderr)
    return 0


def _cmd_run(args) -> int:
    X = load_csv(args.data)
    report = _run_algo(args, X, args.nodes)
    sys.stdout.write(json.dumps(report.to_json_dict()) + "\n")
    return 0


def _cmd_bench(args) -> int:
    X = load_csv(args.data)
    try:
        node_counts = [int(v) for v in args.nodes.split(",") if v.strip()]
    except ValueError:
        raise _UsageError("--nodes must be comma-separated integers")
    if not node_counts or any(p < 1 for p in node_counts):
        raise _UsageError("--nodes entries must be >= 1")
    baseline_part = None
    out = {"algo": args.algo, "data": args.data, "n": X.n, "d": X.d,
           "baseline": args.baseline, "runs": []}
    if args.baseline is not None:
        base_args = argparse.Namespace(**vars(args))
        base_args.algo = args.baseline
        base = _run_algo(base_args, X, 1)
        baseline_part = base.partition
        out["baseline_j"] = base.j
    for p in node_counts:
        t0 = time.perf_counter()
        rep = _run_algo(args, X, p)
        wall_ms = (time.perf_counter() - t0) * 1e3
        entry = {"p": p, "wall_ms": wall_ms, "j": rep.j,
                 "iterations": rep.iterations, "timings_ms": rep.timings_ms}
        if baseline_part is not None:
            entry["ari_vs_baseline"] = adjusted_rand_index(
                rep.partition, baseline_part)
        out["runs"].append(entry)
    sys.stdout.write(json.dumps(out) + "\n")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print("usage error: %s" % exc, file=sys.stderr)
        return 1
    try:
        if args.command == "gen":
            return _cmd_gen(args)
        if args.command == "run":
            return _cmd_run(args)
        return _cmd_bench(args)
    except _UsageError as exc:
        print("usage error: %s" % exc, file=sys.stderr)
        return 1
    except (OSError, ValueError, RuntimeError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
