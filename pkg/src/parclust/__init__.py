"""Desk-scale parallel clustering toolkit.

Simulates a small message-passing node group in one process (threads,
rank 0 as coordinator) and runs partitional, fuzzy, window, density and
divisive algorithms over it. Centralized counterparts are provided as
references; the parallel paths reduce with exact fixed-point sums so the
same input yields bit-identical objectives at any node count.
"""

from .comm import CommAbort, CommWorld, NodeCtx, Shard, split_blocks
from .core import (NOISE, CentroidSet, DataSet, Partition,
                   adjusted_rand_index, generate_blobs, load_csv,
                   sse_objective, squared_euclidean, write_csv)
from .dbscan import (DbscanParams, DdbcParams, LocalDensityModel, dbscan,
                     ddbc, rep_kmeans_model, specific_core_points)
from .fcm import FcmParams, initial_membership, membership_update, pfcm
from .kmeans import KMeansParams, kmeans_centralized, pkm
from .kwindows import (KWindowsParams, MDBinaryTree, RangeQuery, k_windows,
                       orthogonal_range_search, parallel_range_search)
from .pca import (DbscanLocal, KMeansLocal, PrincipalBasis, cpca,
                  cpca_cluster, leading_eigenvector, local_pca)
from .pddp import PddpNode, PddpTree, pddp, pddp_km, pddp_report
from .report import REPORT_SCHEMA, ClusterReport

__version__ = "0.1.0"

__all__ = [
    "CommAbort", "CommWorld", "NodeCtx", "Shard", "split_blocks",
    "NOISE", "CentroidSet", "DataSet", "Partition", "adjusted_rand_index",
    "generate_blobs", "load_csv", "sse_objective", "squared_euclidean",
    "write_csv",
    "DbscanParams", "DdbcParams", "LocalDensityModel", "dbscan", "ddbc",
    "rep_kmeans_model", "specific_core_points",
    "FcmParams", "initial_membership", "membership_update", "pfcm",
    "KMeansParams", "kmeans_centralized", "pkm",
    "KWindowsParams", "MDBinaryTree", "RangeQuery", "k_windows",
    "orthogonal_range_search", "parallel_range_search",
    "DbscanLocal", "KMeansLocal", "PrincipalBasis", "cpca", "cpca_cluster",
    "leading_eigenvector", "local_pca",
    "PddpNode", "PddpTree", "pddp", "pddp_km", "pddp_report",
    "REPORT_SCHEMA", "ClusterReport",
    "__version__",
]
