"""Principal component extraction and PCA-guided distributed clustering.

Local bases come from hand-rolled power iteration with deflation. The
collective step gathers per-node bases plus projected rows, rebuilds an
approximation of the full data at the facilitator, and re-extracts a
global basis that every node then shares.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .comm import CommWorld, NodeCtx, Shard
from .core import NOISE, DataSet
from .dbscan import DbscanParams, dbscan
from .kmeans import KMeansParams, kmeans_centralized
from .report import ClusterReport


def _fix_sign(u: np.ndarray) -> np.ndarray:
    """Flip so the first nonzero entry is positive."""
    for v in u:
        if v != 0.0:
            return -u if v < 0 else u
    return u


def leading_eigenvector(C: np.ndarray, tol: float = 1e-10,
                        max_iter: int = 1000):
    """Dominant eigenpair of a symmetric matrix by power iteration.

    Returns (unit vector, eigenvalue, converged). Convergence means the
    residual |C u - lam u| fell to tol * max(1, |lam|). A zero matrix
    short-circuits to coordinate axis 0 with eigenvalue 0.
    """
    C = np.asarray(C, dtype=np.float64)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValueError("matrix must be square")
    d = C.shape[0]
    if not np.any(C):
        e0 = np.zeros(d)
        e0[0] = 1.0
        return e0, 0.0, True
    norms = np.linalg.norm(C, axis=0)
    v = C[:, int(np.argmax(norms))].copy()
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = C @ v
        lam = float(v @ w)
        if np.linalg.norm(w - lam * v) <= tol * max(1.0, abs(lam)):
            return _fix_sign(v), lam, True
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return _fix_sign(v), 0.0, True  # v spans part of the nullspace
        v = w / nw
    return _fix_sign(v), lam, False


@dataclass(frozen=True)
class PrincipalBasis:
    """Mean plus r orthonormal directions with their variances."""

    mean: np.ndarray
    components: np.ndarray  # (r, d)
    eigenvalues: np.ndarray  # (r,)

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        comps = np.asarray(self.components, dtype=np.float64)
        eigs = np.asarray(self.eigenvalues, dtype=np.float64)
        if comps.ndim != 2 or comps.shape[0] < 1:
            raise ValueError("components must be a non-empty (r, d) array")
        if mean.shape != (comps.shape[1],) or eigs.shape != (comps.shape[0],):
            raise ValueError("mean/eigenvalue shapes do not match components")
        gram = comps @ comps.T
        if not np.allclose(gram, np.eye(comps.shape[0]), atol=1e-8):
            raise ValueError("components are not orthonormal")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "eigenvalues", eigs)

    @property
    def r(self) -> int:
        return self.components.shape[0]


def _pca_of_points(points: np.ndarray, variance_fraction: float) -> PrincipalBasis:
    """Smallest basis whose cumulative eigenvalue share reaches the target."""
    if not 0.0 < variance_fraction <= 1.0:
        raise ValueError("variance_fraction must lie in (0, 1]")
    n, d = points.shape
    mean = points.mean(axis=0)
    centered = points - mean
    C = (centered.T @ centered) / n
    total = float(np.trace(C))
    if total <= 0.0:
        e0 = np.zeros(d)
        e0[0] = 1.0
        return PrincipalBasis(mean, e0[None, :], np.zeros(1))
    comps: list[np.ndarray] = []
    eigs: list[float] = []
    work = C.copy()
    cum = 0.0
    for _ in range(d):
        u, lam, _ = leading_eigenvector(work)
        for prev in comps:  # light re-orthogonalization against drift
            u = u - (u @ prev) * prev
        nu = np.linalg.norm(u)
        if nu == 0.0:
            break
        u = _fix_sign(u / nu)
        lam = max(lam, 0.0)
        comps.append(u)
        eigs.append(lam)
        cum += lam
        if cum / total >= variance_fraction:
            break
        work = work - lam * np.outer(u, u)
    return PrincipalBasis(mean, np.vstack(comps), np.asarray(eigs))


def local_pca(shard: Shard, variance_fraction: float):
    """Basis of one node's block plus the block projected onto it."""
    if len(shard) < 2:
        raise ValueError("local PCA needs at least 2 rows, got %d" % len(shard))
    basis = _pca_of_points(shard.points, variance_fraction)
    projected = (shard.points - basis.mean) @ basis.components.T
    return basis, projected


def _cpca_node(ctx: NodeCtx, shards, variance_fraction):
    basis, projected = local_pca(shards[ctx.rank], variance_fraction)
    gathered = ctx.gather((basis, projected), root=0)
    if ctx.rank == 0:
        recon = np.vstack([b.mean + proj @ b.components for b, proj in gathered])
        global_basis = _pca_of_points(recon, variance_fraction)
    else:
        global_basis = None
    return ctx.broadcast(global_basis, root=0)


def cpca(world: CommWorld, shards, variance_fraction: float) -> PrincipalBasis:
    """Global basis agreed by all nodes from locally compressed blocks."""
    out = world.spmd(_cpca_node, shards, variance_fraction)
    return out[0]


# -- clustering on top of the collective basis ---------------------------


class KMeansLocal:
    """Local clusterer plugin: seeded centralized k-means.

    Runs a handful of restarts with derived seeds and keeps the lowest
    objective; a single random init on a small shard falls into bad
    minima often enough to poison the merged result.
    """

    name = "kmeans"

    def __init__(self, seed: int = 0, max_iter: int = 300, tol: float = 1e-9,
                 restarts: int = 8):
        if restarts < 1:
            raise ValueError("restarts must be >= 1")
        self.seed = seed
        self.max_iter = max_iter
        self.tol = tol
        self.restarts = restarts

    def __call__(self, X: DataSet, k: int) -> np.ndarray:
        best = None
        for i in range(self.restarts):
            params = KMeansParams(k=min(k, X.n), max_iter=self.max_iter,
                                  tol=self.tol,
                                  seed=int(np.random.default_rng(
                                      (self.seed, i)).integers(2**31)))
            _, part, j, _ = kmeans_centralized(X, params)
            if best is None or j < best[0]:
                best = (j, part.labels)
        return best[1]


class DbscanLocal:
    """Local clusterer plugin: density clustering, k is ignored."""

    name = "dbscan"

    def __init__(self, eps: float, min_pts: int):
        self.params = DbscanParams(eps=eps, min_pts=min_pts)

    def __call__(self, X: DataSet, k: int) -> np.ndarray:
        return dbscan(X, self.params).labels


def _maximin_init(points: np.ndarray, weights: np.ndarray, k: int) -> np.ndarray:
    """Deterministic spread-out seeding: heaviest point first, then the
    point farthest from every chosen center. Ties go to the lowest index."""
    chosen = [int(np.argmax(weights))]
    d2 = np.sum((points - points[chosen[0]]) ** 2, axis=1)
    while len(chosen) < k:
        nxt = int(np.argmax(d2))
        chosen.append(nxt)
        diff = points - points[nxt]
        d2 = np.minimum(d2, np.sum(diff * diff, axis=1))
    return points[chosen].copy()


def _weighted_kmeans(points: np.ndarray, weights: np.ndarray, k: int,
                     max_iter: int = 100) -> np.ndarray:
    """Lloyd iteration over weighted points; returns per-point labels."""
    n = points.shape[0]
    centers = _maximin_init(points, weights, k)
    labels = np.zeros(n, dtype=np.int64)
    for _ in range(max_iter):
        d2 = np.empty((n, k))
        for i in range(k):
            diff = points - centers[i]
            d2[:, i] = np.sum(diff * diff, axis=1)
        new_labels = np.argmin(d2, axis=1)
        for i in range(k):
            mask = new_labels == i
            wsum = weights[mask].sum()
            if wsum > 0:
                centers[i] = (points[mask] * weights[mask, None]).sum(axis=0) / wsum
            else:  # relocate to the farthest point to keep k clusters
                far = int(np.argmax(d2[np.arange(n), new_labels]))
                centers[i] = points[far]
                new_labels[far] = i
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return labels


def _representatives(proj: np.ndarray, labels: np.ndarray, reps_per_cluster: int,
                     rng: np.random.Generator) -> list[int]:
    """Per cluster: the row nearest the centroid plus seeded extra samples."""
    rows: list[int] = []
    for c in np.unique(labels[labels != NOISE]):
        members = np.nonzero(labels == c)[0]
        centroid = proj[members].mean(axis=0)
        diff = proj[members] - centroid
        nearest = members[int(np.argmin(np.sum(diff * diff, axis=1)))]
        rows.append(int(nearest))
        others = members[members != nearest]
        extra = min(reps_per_cluster - 1, others.size)
        if extra > 0:
            rows.extend(int(r) for r in rng.choice(others, size=extra,
                                                   replace=False))
    return rows


def _cpca_cluster_node(ctx: NodeCtx, shards, clusterer, k, reps_per_cluster,
                       variance_fraction, seed):
    shard = shards[ctx.rank]
    _, proj_local = local_pca(shard, variance_fraction)
    local_labels = np.asarray(clusterer(DataSet.from_points(proj_local), k),
                              dtype=np.int64)

    rng = np.random.default_rng((seed, ctx.rank))
    rep_rows = _representatives(proj_local, local_labels, reps_per_cluster, rng)
    rep_points = shard.points[rep_rows]  # original space, representatives only

    gathered = ctx.gather(rep_points, root=0)
    if ctx.rank == 0:
        global_basis = _pca_of_points(np.vstack(gathered), variance_fraction)
    else:
        global_basis = None
    global_basis = ctx.broadcast(global_basis, root=0)

    proj_global = (shard.points - global_basis.mean) @ global_basis.components.T
    refined = np.asarray(clusterer(DataSet.from_points(proj_global), k),
                         dtype=np.int64)

    sketches = []
    for c in np.unique(refined[refined != NOISE]):
        members = proj_global[refined == c]
        centroid = members.mean(axis=0)
        diff = members - centroid
        radius = float(np.sqrt(np.max(np.sum(diff * diff, axis=1))))
        sketches.append((int(c), centroid, int(members.shape[0]), radius))

    all_sketches = ctx.gather(sketches, root=0)
    if ctx.rank == 0:
        flat = [(rank, c, centroid, count)
                for rank, group in enumerate(all_sketches)
                for c, centroid, count, _radius in group]
        if k > len(flat):
            raise ValueError("k=%d exceeds the %d gathered cluster sketches"
                             % (k, len(flat)))
        pts = np.vstack([f[2] for f in flat])
        wts = np.asarray([f[3] for f in flat], dtype=np.float64)
        assign = _weighted_kmeans(pts, wts, k)
        mapping = {(f[0], f[1]): int(assign[i]) for i, f in enumerate(flat)}
        n_reps = sum(len(g) for g in gathered)
    else:
        mapping, n_reps = None, 0
    mapping = ctx.broadcast(mapping, root=0)

    final = np.full(refined.shape[0], NOISE, dtype=np.int64)
    for i, c in enumerate(refined.tolist()):
        if c != NOISE:
            final[i] = mapping[(ctx.rank, c)]
    pieces = ctx.gather(final, root=0)
    if ctx.rank == 0:
        return np.concatenate(pieces), len(mapping), n_reps
    return None


def cpca_cluster(world: CommWorld, shards, clusterer, k: int,
                 reps_per_cluster: int = 3, variance_fraction: float = 0.9,
                 seed: int = 0) -> ClusterReport:
    """Cluster in local PCA space, agree on a global basis from gathered
    representatives, re-cluster in that space, and merge per-node cluster
    sketches with size-weighted k-means at the facilitator."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if reps_per_cluster < 1:
        raise ValueError("reps_per_cluster must be >= 1")
    comm0, wall0 = world.comm_seconds_total(), world.wall_seconds_total()
    out = world.spmd(_cpca_cluster_node, shards, clusterer, k,
                     reps_per_cluster, variance_fraction, seed)
    labels, n_sketches, n_reps = out[0]
    comm_s = world.comm_seconds_total() - comm0
    wall_s = world.wall_seconds_total() - wall0
    n = sum(len(s) for s in shards)
    return ClusterReport(
        algo="cpca-cluster",
        p=world.size,
        params={"k": k, "reps_per_cluster": reps_per_cluster,
                "variance_fraction": variance_fraction, "seed": seed,
                "local_algo": getattr(clusterer, "name", "custom")},
        n=n,
        d=shards[0].points.shape[1],
        labels=labels,
        model={"sketches": int(n_sketches), "representatives": int(n_reps)},
        timings_ms={"split": 0.0,
                    "compute": (wall_s - comm_s) * 1e3,
                    "comm": comm_s * 1e3},
    )
