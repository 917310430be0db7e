"""DBSCAN on top of the linear BVH."""

from ._common import NOISE, DbscanOutput, DbscanParams, finalize_labels
from .densebox import DenseGrid, build_dense_grid, fdbscan_densebox
from .fdbscan import detect_core_points, fdbscan, fof_connected_components, legacy_graph_dbscan
from .oracle import brute_force_counts, dsdbscan_oracle
from .verify import check_equivalence


__all__ = [
    "NOISE",
    "DbscanOutput",
    "DbscanParams",
    "DenseGrid",
    "brute_force_counts",
    "build_dense_grid",
    "check_equivalence",
    "detect_core_points",
    "dsdbscan_oracle",
    "fdbscan",
    "fdbscan_densebox",
    "finalize_labels",
    "fof_connected_components",
    "legacy_graph_dbscan",
]
