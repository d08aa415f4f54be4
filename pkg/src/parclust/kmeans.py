"""Lloyd k-means: centralized baseline and the bulk-synchronous parallel run.

Both paths share the assignment and update arithmetic. Per-cluster sums
and the objective are accumulated exactly (see exactsum), so the parallel
run reproduces the centralized one bit for bit for any node count.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .comm import CommWorld, NodeCtx, split_blocks
from .core import CentroidSet, DataSet, Partition
from .exactsum import column_sums_fixed, fixed_mean, fixed_to_float, sum_fixed
from .report import ClusterReport


@dataclass(frozen=True)
class KMeansParams:
    k: int
    max_iter: int = 300
    tol: float = 1e-9
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.tol < 0:
            raise ValueError("tol must be >= 0")


def _init_centers(X: DataSet, k: int, seed: int) -> np.ndarray:
    """k distinct rows sampled without replacement."""
    rng = np.random.default_rng(seed)
    idx = rng.choice(X.n, size=k, replace=False)
    return X.points[np.sort(idx)].copy()


def _assign(points: np.ndarray, centers: np.ndarray):
    """Nearest-centroid labels (ties to the lowest index) and the min distances."""
    n = points.shape[0]
    d2 = np.empty((n, centers.shape[0]), dtype=np.float64)
    for i in range(centers.shape[0]):
        diff = points - centers[i]
        d2[:, i] = np.sum(diff * diff, axis=1)
    labels = np.argmin(d2, axis=1).astype(np.int64)
    return labels, d2[np.arange(n), labels]


def _cluster_stats(points, labels, k, d2min) -> list[int]:
    """Flat integer stats vector: per-cluster exact sums, counts, objective."""
    out: list[int] = []
    counts: list[int] = []
    for i in range(k):
        rows = points[labels == i]
        counts.append(int(rows.shape[0]))
        out.extend(column_sums_fixed(rows))
    out.extend(counts)
    out.append(sum_fixed(d2min))
    return out


def _unpack_stats(vec, k, d):
    sums = vec[:k * d]
    counts = vec[k * d:k * d + k]
    return sums, counts, vec[-1]


def _new_centers(sums, counts, k, d, old_centers):
    """Per-cluster means; empty clusters keep their slot for later repair."""
    centers = old_centers.copy()
    empty = []
    for i in range(k):
        if counts[i] == 0:
            empty.append(i)
            continue
        for j in range(d):
            centers[i, j] = fixed_mean(sums[i * d + j], counts[i])
    return centers, empty


def _local_farthest(points, gids, d2min, used):
    """Best relocation candidate on this block: max distance, ties to lowest id."""
    best = (-np.inf, -1, None)
    for row in np.argsort(-d2min, kind="stable"):
        gid = int(gids[row])
        if gid in used:
            continue
        return (float(d2min[row]), gid, points[row].copy())
    return best


def _lloyd_step_serial(points, centers, k, d):
    labels, d2min = _assign(points, centers)
    stats = _cluster_stats(points, labels, k, d2min)
    return labels, d2min, _unpack_stats(stats, k, d)


def kmeans_centralized(X: DataSet, params: KMeansParams, init_centers=None):
    """Full-data Lloyd iteration.

    Returns (CentroidSet, Partition, objective, iterations). Stops when
    the objective decreases by at most tol between iterations, or at
    max_iter. Empty clusters are repaired by relocating the centroid to
    the point farthest from its assigned centroid.
    """
    if params.k > X.n:
        raise ValueError("k=%d exceeds the %d available rows" % (params.k, X.n))
    k, d = params.k, X.d
    if init_centers is None:
        centers = _init_centers(X, k, params.seed)
    else:
        centers = np.array(init_centers, dtype=np.float64, copy=True)
        if centers.shape != (k, d):
            raise ValueError("init_centers must have shape (k, d)")
    pts = X.points
    gids = np.arange(X.n)
    j_prev = None
    labels = np.zeros(X.n, dtype=np.int64)
    j = 0.0
    iters = 0
    for t in range(1, params.max_iter + 1):
        labels, d2min, (sums, counts, j_fixed) = _lloyd_step_serial(pts, centers, k, d)
        j = fixed_to_float(j_fixed)
        iters = t
        if j_prev is not None and (j_prev - j) <= params.tol:
            break
        j_prev = j
        centers, empty = _new_centers(sums, counts, k, d, centers)
        used: set[int] = set()
        for i in empty:
            dist, gid, coords = _local_farthest(pts, gids, d2min, used)
            if gid < 0:
                raise ValueError("cannot repair empty cluster: no free points")
            centers[i] = coords
            used.add(gid)
    return CentroidSet(centers), Partition(labels), j, iters


def _pkm_node(ctx: NodeCtx, shards, X, params, init_centers):
    shard = shards[ctx.rank]
    pts = shard.points
    k, d = params.k, X.d
    if ctx.rank == 0:
        if init_centers is None:
            centers0 = _init_centers(X, k, params.seed)
        else:
            centers0 = np.array(init_centers, dtype=np.float64, copy=True)
            if centers0.shape != (k, d):
                raise ValueError("init_centers must have shape (k, d)")
    else:
        centers0 = None
    centers = np.array(ctx.broadcast(centers0, root=0), dtype=np.float64, copy=True)

    j_prev = None
    labels = np.zeros(len(shard), dtype=np.int64)
    j = 0.0
    iters = 0
    for t in range(1, params.max_iter + 1):
        labels, d2min = _assign(pts, centers)
        g = ctx.allreduce_sum(_cluster_stats(pts, labels, k, d2min))
        sums, counts, j_fixed = _unpack_stats(g, k, d)
        j = fixed_to_float(j_fixed)
        iters = t
        if j_prev is not None and (j_prev - j) <= params.tol:
            break
        j_prev = j
        centers, empty = _new_centers(sums, counts, k, d, centers)
        used: set[int] = set()
        for i in empty:
            cand = _local_farthest(pts, shard.ids, d2min, used)
            cands = ctx.gather((cand[0], cand[1]), root=0)
            if ctx.rank == 0:
                best_dist, best_gid = -np.inf, -1
                for dist, gid in cands:  # rank order keeps ties on the lowest id
                    if gid >= 0 and dist > best_dist:
                        best_dist, best_gid = dist, gid
                if best_gid < 0:
                    raise ValueError("cannot repair empty cluster: no free points")
                pick = best_gid
            else:
                pick = None
            pick = ctx.broadcast(pick, root=0)
            owner = cand[1] == pick
            coords = cand[2] if owner else None
            coords_all = ctx.gather(coords, root=0)
            chosen = None
            if ctx.rank == 0:
                chosen = next(c for c in coords_all if c is not None)
            centers[i] = ctx.broadcast(chosen, root=0)
            used.add(pick)

    gathered = ctx.gather(labels, root=0)
    if ctx.rank == 0:
        return np.concatenate(gathered), centers, j, iters
    return None


def pkm(world: CommWorld, X: DataSet, params: KMeansParams,
        init_centers=None) -> ClusterReport:
    """Parallel k-means over a simulated node group.

    Rank 0 draws (or receives) the initial centroids and broadcasts
    them; every iteration reduces per-cluster sums, counts and the
    objective in one collective. Output is independent of world size.
    """
    if params.k > X.n:
        raise ValueError("k=%d exceeds the %d available rows" % (params.k, X.n))
    t0 = time.perf_counter()
    shards = split_blocks(X, world.size)
    split_s = time.perf_counter() - t0
    comm0, wall0 = world.comm_seconds_total(), world.wall_seconds_total()
    out = world.spmd(_pkm_node, shards, X, params, init_centers)
    labels, centers, j, iters = out[0]
    comm_s = world.comm_seconds_total() - comm0
    wall_s = world.wall_seconds_total() - wall0
    return ClusterReport(
        algo="pkm",
        p=world.size,
        params={"k": params.k, "max_iter": params.max_iter,
                "tol": params.tol, "seed": params.seed},
        n=X.n,
        d=X.d,
        labels=labels,
        centroids=centers,
        j=j,
        iterations=iters,
        timings_ms={"split": split_s * 1e3,
                    "compute": (wall_s - comm_s) * 1e3,
                    "comm": comm_s * 1e3},
    )
