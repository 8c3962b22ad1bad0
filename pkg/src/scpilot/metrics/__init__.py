"""Scoring formulas for annotation consistency, integration quality, and trajectories.

All operations are pure functions over numpy arrays / plain mappings and are
safe for concurrent use. Label vectors may hold any hashable values; metrics
are invariant under label renaming where the formula allows it.
"""

from scpilot.metrics.partition import (
    MATCH_SCORES,
    annotation_accuracy,
    annotation_match_score,
    ari,
    nmi,
)
from scpilot.metrics.embedding import asw, isolated_label_score, isolated_labels, pcr_comparison
from scpilot.metrics.graph import NeighborGraph, graph_connectivity, kbet, knn_graph, lisi
from scpilot.metrics.trajectory import (
    Trajectory,
    cor_dist,
    cor_features,
    edgeflip,
    f1_branches,
    feature_importance,
    trajectory_overall,
)
from scpilot.metrics.report import (
    BATCH_REMOVAL_METRICS,
    BIO_CONSERVATION_METRICS,
    MetricReport,
    annotation_report,
    batch_overall,
    batch_report,
    pca_embedding,
    trajectory_report,
)

__all__ = [
    "MATCH_SCORES",
    "annotation_match_score",
    "annotation_accuracy",
    "ari",
    "nmi",
    "asw",
    "isolated_label_score",
    "isolated_labels",
    "pcr_comparison",
    "NeighborGraph",
    "knn_graph",
    "lisi",
    "kbet",
    "graph_connectivity",
    "Trajectory",
    "edgeflip",
    "f1_branches",
    "cor_dist",
    "cor_features",
    "feature_importance",
    "trajectory_overall",
    "BATCH_REMOVAL_METRICS",
    "BIO_CONSERVATION_METRICS",
    "MetricReport",
    "batch_overall",
    "batch_report",
    "trajectory_report",
    "annotation_report",
    "pca_embedding",
]
