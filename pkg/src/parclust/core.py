"""Dense vector math, clustering objectives, partition metrics, dataset I/O."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exactsum import fixed_to_float, sum_fixed

NOISE = -1


@dataclass(frozen=True)
class DataSet:
    """An n x d float64 matrix with stable global row ids.

    Row ids are a permutation of 0..n-1 and survive sharding, so results
    computed on distributed blocks can be reassembled in original order.
    """

    points: np.ndarray
    ids: np.ndarray

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] < 1:
            raise ValueError("points must be a 2-D array with at least one column")
        if not np.all(np.isfinite(pts)):
            raise ValueError("dataset contains non-finite values")
        ids = np.asarray(self.ids, dtype=np.int64)
        if ids.shape != (pts.shape[0],):
            raise ValueError("ids must have one entry per row")
        if not np.array_equal(np.sort(ids), np.arange(pts.shape[0])):
            raise ValueError("ids must be a permutation of 0..n-1")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "ids", ids)

    @classmethod
    def from_points(cls, points) -> "DataSet":
        pts = np.ascontiguousarray(points, dtype=np.float64)
        return cls(pts, np.arange(pts.shape[0], dtype=np.int64))

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class Partition:
    """Cluster labels per row; NOISE (-1) marks unclustered points."""

    labels: np.ndarray

    def __post_init__(self):
        lab = np.asarray(self.labels, dtype=np.int64)
        if lab.ndim != 1:
            raise ValueError("labels must be a 1-D array")
        if lab.size and lab.min() < NOISE:
            raise ValueError("labels must be >= -1")
        object.__setattr__(self, "labels", lab)

    @property
    def k(self) -> int:
        """Number of distinct non-noise labels."""
        return int(np.unique(self.labels[self.labels != NOISE]).size)

    def __len__(self) -> int:
        return int(self.labels.size)


@dataclass(frozen=True)
class CentroidSet:
    """k cluster centers, one per row."""

    centers: np.ndarray

    def __post_init__(self):
        c = np.ascontiguousarray(self.centers, dtype=np.float64)
        if c.ndim != 2 or c.shape[0] < 1:
            raise ValueError("centers must be a non-empty 2-D array")
        if not np.all(np.isfinite(c)):
            raise ValueError("centers contain non-finite values")
        object.__setattr__(self, "centers", c)

    @property
    def k(self) -> int:
        return self.centers.shape[0]


def squared_euclidean(x, y) -> float:
    """Squared Euclidean distance between two equal-length vectors."""
    a = np.asarray(x, dtype=np.float64)
    b = np.asarray(y, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("dimension mismatch: %s vs %s" % (a.shape, b.shape))
    diff = a - b
    return float(np.sum(diff * diff))


def sse_objective(X: DataSet, partition: Partition, centroids: CentroidSet) -> float:
    """Sum of squared distances from each clustered point to its centroid.

    Noise points are excluded. Accumulation is exact, so the value does
    not depend on row blocking.
    """
    labels = partition.labels
    if labels.shape[0] != X.n:
        raise ValueError("partition length does not match dataset")
    mask = labels != NOISE
    if mask.any():
        used = labels[mask]
        if used.max() >= centroids.k or used.min() < 0:
            raise ValueError("label out of range for centroid set")
        diff = X.points[mask] - centroids.centers[used]
        return fixed_to_float(sum_fixed(np.sum(diff * diff, axis=1)))
    return 0.0


def _canonical_labels(labels: np.ndarray) -> np.ndarray:
    """Relabel by order of first appearance, for set-partition comparison."""
    out = np.empty(labels.shape[0], dtype=np.int64)
    seen: dict[int, int] = {}
    for i, v in enumerate(labels.tolist()):
        out[i] = seen.setdefault(v, len(seen))
    return out


def adjusted_rand_index(a: Partition, b: Partition) -> float:
    """Chance-corrected pair-counting agreement between two partitions.

    Noise is treated as an ordinary label. When the correction term is
    degenerate (e.g. both sides are all singletons), returns 1.0 if the
    partitions are identical as set partitions and 0.0 otherwise.
    """
    la, lb = a.labels, b.labels
    if la.shape[0] != lb.shape[0]:
        raise ValueError("partitions have different lengths")
    n = la.shape[0]
    _, ia = np.unique(la, return_inverse=True)
    _, ib = np.unique(lb, return_inverse=True)
    cont = np.zeros((int(ia.max()) + 1 if n else 1, int(ib.max()) + 1 if n else 1),
                    dtype=np.int64)
    np.add.at(cont, (ia, ib), 1)

    def pairs2(m):
        m = m.astype(object)  # python ints, no overflow
        return int(np.sum(m * (m - 1)) // 2)

    sum_ij = pairs2(cont)
    sum_a = pairs2(cont.sum(axis=1))
    sum_b = pairs2(cont.sum(axis=0))
    total = n * (n - 1) // 2
    # ARI scaled through by 2*total to stay in exact integers.
    num = 2 * (total * sum_ij - sum_a * sum_b)
    den = total * (sum_a + sum_b) - 2 * sum_a * sum_b
    if den == 0:
        same = np.array_equal(_canonical_labels(la), _canonical_labels(lb))
        return 1.0 if same else 0.0
    return num / den


def generate_blobs(seed: int, k: int, per_cluster: int, d: int,
                   spread: float = 1.0, separation: float = 10.0):
    """Seeded isotropic Gaussian blobs with pairwise-separated centers.

    Returns (DataSet, ground-truth Partition). Centers are drawn by
    rejection sampling inside a box that grows if placement stalls, so
    generation is deterministic for a fixed seed and always terminates.
    """
    if k < 1 or per_cluster < 1 or d < 1:
        raise ValueError("k, per_cluster and d must be positive")
    if spread <= 0 or separation <= 0:
        raise ValueError("spread and separation must be positive")
    rng = np.random.default_rng(seed)
    side = separation * max(k, 2)
    centers: list[np.ndarray] = []
    rejects = 0
    while len(centers) < k:
        cand = rng.uniform(0.0, side, size=d)
        if all(np.linalg.norm(cand - c) >= separation for c in centers):
            centers.append(cand)
        else:
            rejects += 1
            if rejects >= 1000:
                side *= 2.0
                rejects = 0
    blocks = [c + rng.normal(0.0, spread, size=(per_cluster, d)) for c in centers]
    points = np.vstack(blocks)
    labels = np.repeat(np.arange(k, dtype=np.int64), per_cluster)
    return DataSet.from_points(points), Partition(labels)


def load_csv(path) -> DataSet:
    """Read a comma-separated numeric matrix, skipping one optional header.

    A header is detected when any field of row 1 fails to parse as a
    number. Errors name the offending 1-based file row.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        raw = list(csv.reader(fh))
    if not raw:
        raise ValueError("%s: empty file" % path)

    def parse_row(row, file_row):
        vals = []
        for col, cell in enumerate(row, start=1):
            try:
                v = float(cell)
            except ValueError:
                raise ValueError("%s: non-numeric value %r at row %d, column %d"
                                 % (path, cell, file_row, col)) from None
            if not np.isfinite(v):
                raise ValueError("%s: non-finite value at row %d, column %d"
                                 % (path, file_row, col))
            vals.append(v)
        return vals

    def is_numeric_row(row):
        if not row:
            return False
        for cell in row:
            try:
                float(cell)
            except ValueError:
                return False
        return True

    header = not is_numeric_row(raw[0])
    start = 1 if header else 0
    body = raw[start:]
    if not body:
        raise ValueError("%s: no data rows" % path)
    width = len(body[0])
    rows = []
    for offset, row in enumerate(body):
        file_row = start + offset + 1
        if len(row) != width:
            raise ValueError("%s: expected %d fields but found %d at row %d"
                             % (path, width, len(row), file_row))
        rows.append(parse_row(row, file_row))
    return DataSet.from_points(np.asarray(rows, dtype=np.float64))


def write_csv(X: DataSet, path) -> None:
    """Write points in row-id order with 17 significant digits (exact round-trip)."""
    order = np.argsort(X.ids)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for row in X.points[order]:
            fh.write(",".join("%.17g" % v for v in row))
            fh.write("\n")
