"""Fuzzy c-means over the simulated runtime.

Each node keeps the membership rows of its own block; centroid updates
and the objective are global reductions. Initial memberships are drawn
per global row id, so the trajectory does not depend on how many nodes
the rows were split over. A single-node world is the centralized run.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .comm import CommWorld, NodeCtx, Shard, split_blocks
from .core import DataSet
from .exactsum import column_sums_fixed, fixed_ratio, fixed_to_float, sum_fixed
from .report import ClusterReport


@dataclass(frozen=True)
class FcmParams:
    k: int
    m: float = 2.0
    max_iter: int = 300
    tol: float = 1e-9
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.m <= 1.0:
            raise ValueError("fuzzifier m must be > 1")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.tol < 0:
            raise ValueError("tol must be >= 0")


def initial_membership(n: int, k: int, seed: int) -> np.ndarray:
    """Row-stochastic n x k matrix; row j depends only on (seed, j)."""
    rng = np.random.default_rng(seed)
    u = rng.random((n, k))
    return u / u.sum(axis=1, keepdims=True)


def _distances_sq(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d2 = np.empty((points.shape[0], centers.shape[0]), dtype=np.float64)
    for i in range(centers.shape[0]):
        diff = points - centers[i]
        d2[:, i] = np.sum(diff * diff, axis=1)
    return d2


def membership_update(shard: Shard, centers: np.ndarray, m: float) -> np.ndarray:
    """Standard inverse-distance membership update for the local rows.

    A point coinciding with one or more centroids gets membership 1 on
    the lowest-index coincident centroid and 0 elsewhere.
    """
    d2 = _distances_sq(shard.points, centers)
    u = np.zeros_like(d2)
    zero_rows = (d2 == 0.0).any(axis=1)
    if zero_rows.any():
        hit = np.argmax(d2[zero_rows] == 0.0, axis=1)
        u[np.nonzero(zero_rows)[0], hit] = 1.0
    reg = ~zero_rows
    if reg.any():
        w = d2[reg] ** (-1.0 / (m - 1.0))
        u[reg] = w / w.sum(axis=1, keepdims=True)
    return u


def centroid_update(ctx: NodeCtx, shard: Shard, u: np.ndarray,
                    m: float) -> np.ndarray:
    """Weighted means from two global reductions (numerators, denominators)."""
    k = u.shape[1]
    d = shard.points.shape[1]
    w = u ** m
    num_local: list[int] = []
    for i in range(k):
        num_local.extend(column_sums_fixed(shard.points * w[:, i:i + 1]))
    den_local = column_sums_fixed(w)
    nums = ctx.allreduce_sum(num_local)
    dens = ctx.allreduce_sum(den_local)
    centers = np.empty((k, d), dtype=np.float64)
    for i in range(k):
        if dens[i] == 0:
            raise ValueError("degenerate membership column %d: all weights zero" % i)
        for j in range(d):
            centers[i, j] = fixed_ratio(nums[i * d + j], dens[i])
    return centers


def fcm_objective(ctx: NodeCtx, shard: Shard, u: np.ndarray,
                  centers: np.ndarray, m: float) -> float:
    """Weighted within-cluster scatter, reduced exactly over all nodes."""
    d2 = _distances_sq(shard.points, centers)
    local = sum_fixed((u ** m) * d2)
    total = ctx.allreduce_sum([local])
    return fixed_to_float(total[0])


def _pfcm_node(ctx: NodeCtx, shards, X, params):
    shard = shards[ctx.rank]
    u = initial_membership(X.n, params.k, params.seed)[shard.ids]
    j_prev = None
    j = 0.0
    iters = 0
    centers = None
    for t in range(1, params.max_iter + 1):
        centers = centroid_update(ctx, shard, u, params.m)
        u = membership_update(shard, centers, params.m)
        j = fcm_objective(ctx, shard, u, centers, params.m)
        iters = t
        if j_prev is not None and abs(j_prev - j) <= params.tol:
            break
        j_prev = j
    labels = np.argmax(u, axis=1).astype(np.int64)  # ties to the lowest index
    gathered = ctx.gather(labels, root=0)
    if ctx.rank == 0:
        return np.concatenate(gathered), centers, j, iters
    return None


def pfcm(world: CommWorld, X: DataSet, params: FcmParams) -> ClusterReport:
    """Parallel fuzzy c-means; defuzzified labels are argmax memberships."""
    if params.k > X.n:
        raise ValueError("k=%d exceeds the %d available rows" % (params.k, X.n))
    t0 = time.perf_counter()
    shards = split_blocks(X, world.size)
    split_s = time.perf_counter() - t0
    comm0, wall0 = world.comm_seconds_total(), world.wall_seconds_total()
    out = world.spmd(_pfcm_node, shards, X, params)
    labels, centers, j, iters = out[0]
    comm_s = world.comm_seconds_total() - comm0
    wall_s = world.wall_seconds_total() - wall0
    return ClusterReport(
        algo="pfcm",
        p=world.size,
        params={"k": params.k, "m": params.m, "max_iter": params.max_iter,
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
