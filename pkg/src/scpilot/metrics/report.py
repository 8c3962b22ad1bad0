"""Report assembly: the ten-metric integration score and the trajectory score."""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from scpilot.errors import MetricInputError
from scpilot.metrics import embedding as emb
from scpilot.metrics import graph as gr
from scpilot.metrics import trajectory as traj
from scpilot.metrics.partition import annotation_accuracy, ari, nmi

BATCH_REMOVAL_METRICS = ("kbet", "ilisi_graph", "asw_batch", "graph_connectivity", "pcr_comparison")
BIO_CONSERVATION_METRICS = ("clisi_graph", "ari", "nmi", "asw_cell", "isolated_labels")

DEFAULT_W_BATCH = 0.4
DEFAULT_W_BIO = 0.6


@dataclass(frozen=True)
class MetricReport:
    """Per-metric values in [0, 1], group means, and the aggregate score."""

    kind: str
    per_metric: dict[str, float]
    group_means: dict[str, float]
    overall: float
    notes: dict[str, object] = field(default_factory=dict)

    def rows(self) -> list[tuple[str, float]]:
        out = sorted(self.per_metric.items())
        out += [(f"group:{k}", v) for k, v in sorted(self.group_means.items())]
        out.append(("overall", self.overall))
        return out


def batch_overall(
    values: Mapping[str, float],
    w_batch: float = DEFAULT_W_BATCH,
    w_bio: float = DEFAULT_W_BIO,
) -> float:
    """Weighted average of the batch-removal and bio-conservation group means.

    All ten metrics must be present and within [0, 1] (ARI already clipped).
    """
    for name in BATCH_REMOVAL_METRICS + BIO_CONSERVATION_METRICS:
        if name not in values:
            raise MetricInputError(f"missing metric {name!r}")
        v = values[name]
        if not np.isfinite(v) or not (-1e-9 <= v <= 1.0 + 1e-9):
            raise MetricInputError(f"metric {name!r}={v} outside [0, 1]")
    batch_mean = float(np.mean([values[m] for m in BATCH_REMOVAL_METRICS]))
    bio_mean = float(np.mean([values[m] for m in BIO_CONSERVATION_METRICS]))
    return w_batch * batch_mean + w_bio * bio_mean


def pca_embedding(matrix: np.ndarray, n_comps: int = 20) -> np.ndarray:
    """Deterministic PCA scores of a raw matrix (baseline for PCR comparison)."""
    x = np.asarray(matrix, dtype=np.float64)
    centered = x - x.mean(axis=0)
    u, s, _ = np.linalg.svd(centered, full_matrices=False)
    keep = min(n_comps, s.size)
    return (u * s)[:, :keep]


def batch_report(
    embedding_before: np.ndarray,
    embedding_after: np.ndarray,
    batches: Sequence,
    cell_types: Sequence,
    cluster_labels: Sequence | None = None,
    k: int = 15,
    w_batch: float = DEFAULT_W_BATCH,
    w_bio: float = DEFAULT_W_BIO,
) -> MetricReport:
    """Compute all ten integration metrics on an embedding.

    ARI/NMI compare `cell_types` against `cluster_labels`; without an explicit
    clustering, a deterministic k-means-free surrogate is used (nearest
    cell-type centroid in the embedding), which rewards embeddings whose
    geometry recovers the annotated types.
    """
    after = np.asarray(embedding_after, dtype=np.float64)
    batches = np.asarray(batches)
    cell_types = np.asarray(cell_types)
    notes: dict[str, object] = {"k": k, "w_batch": w_batch, "w_bio": w_bio}

    if cluster_labels is None:
        cluster_labels = _centroid_clusters(after, cell_types)
        notes["clustering"] = "centroid_surrogate"
    graph = gr.knn_graph(after, k)

    raw_ari = ari(cell_types, cluster_labels)
    if raw_ari < 0:
        notes["ari_raw"] = raw_ari
    values = {
        "kbet": gr.kbet(graph, batches, groups=cell_types),
        "ilisi_graph": gr.lisi(graph, batches, "ilisi_batch"),
        "asw_batch": emb.asw(after, batches, flavor="batch", groups=cell_types),
        "graph_connectivity": gr.graph_connectivity(graph, cell_types),
        "pcr_comparison": emb.pcr_comparison(embedding_before, after, batches),
        "clisi_graph": gr.lisi(graph, cell_types, "clisi_cell"),
        "ari": max(raw_ari, 0.0),
        "nmi": nmi(cell_types, cluster_labels),
        "asw_cell": emb.asw(after, cell_types, flavor="cell"),
        "isolated_labels": emb.isolated_label_score(after, cell_types, batches),
    }
    if emb.batch_variance_fraction(np.asarray(embedding_before, dtype=np.float64), batches) <= 0:
        notes["pcr_flag"] = "no batch variance in the before-embedding"
    iso = emb.isolated_labels(cell_types, batches)
    if len(iso) == len(np.unique(cell_types)):
        notes["isolated_flag"] = "all labels share the minimum batch count"
    group_means = {
        "batch_removal": float(np.mean([values[m] for m in BATCH_REMOVAL_METRICS])),
        "bio_conservation": float(np.mean([values[m] for m in BIO_CONSERVATION_METRICS])),
    }
    overall = batch_overall(values, w_batch, w_bio)
    return MetricReport("batch", values, group_means, overall, notes)


def _centroid_clusters(coords: np.ndarray, cell_types: np.ndarray) -> np.ndarray:
    """Assign each cell to its nearest cell-type centroid (deterministic)."""
    uniq = np.unique(cell_types)
    centroids = np.stack([coords[cell_types == lab].mean(axis=0) for lab in uniq])
    d = ((coords[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d, axis=1)


def trajectory_report(
    ref: traj.Trajectory,
    pred: traj.Trajectory,
    ref_importance: Mapping[str, float] | None = None,
    pred_importance: Mapping[str, float] | None = None,
    expression: np.ndarray | None = None,
    cell_ids: Sequence[str] | None = None,
    features: Sequence[str] | None = None,
    ref_root: str | None = None,
    seed: int = 0,
) -> MetricReport:
    """Compute the trajectory metrics and their geometric-mean overall.

    Feature agreement uses explicit importance vectors when given; otherwise
    they are derived from `expression` via pseudotime correlation (ref root
    fixed, pred root chosen to maximize agreement).
    """
    notes: dict[str, object] = {"cor_dist_seed": seed}
    if ref_importance is None or pred_importance is None:
        if expression is None or cell_ids is None or features is None:
            raise MetricInputError(
                "cor_features needs importance vectors or an expression matrix"
            )
        root = ref_root if ref_root is not None else sorted(ref.milestones)[0]
        ref_importance = traj.feature_importance(ref, expression, cell_ids, features, root)
        pred_root, pred_importance = traj.best_root_importance(
            pred, expression, cell_ids, features, ref_importance
        )
        notes["ref_root"] = root
        notes["pred_root"] = pred_root

    pairs = traj.sample_cell_pairs(ref.cells(), seed=seed)
    ref_d = ref.pairwise_geodesics(pairs)
    pred_d = pred.pairwise_geodesics(pairs)
    cor_dist_score, flagged = traj._pearson01(ref_d, pred_d)
    if flagged:
        notes["cor_dist_flag"] = "constant distance vector"

    values = {
        "edgeflip": traj.edgeflip(ref, pred),
        "f1_branches": traj.f1_branches(ref, pred),
        "cor_dist": cor_dist_score,
        "cor_features": traj.cor_features(ref_importance, pred_importance),
        "f1_milestones": traj.f1_branches(ref, pred, flavor="milestones"),
        "wcor_features": traj.cor_features(ref_importance, pred_importance, weighted=True),
    }
    overall = traj.trajectory_overall(
        values["edgeflip"], values["f1_branches"], values["cor_dist"], values["cor_features"]
    )
    group_means = {
        "core_four": float(
            np.mean([values[m] for m in ("edgeflip", "f1_branches", "cor_dist", "cor_features")])
        )
    }
    return MetricReport("trajectory", values, group_means, overall, notes)


def annotation_report(match_classes: Sequence[str]) -> MetricReport:
    """Mean consistency score over per-cluster match verdicts."""
    acc = annotation_accuracy(match_classes)
    counts = {c: int(sum(1 for m in match_classes if m == c)) for c in set(match_classes)}
    return MetricReport(
        "annotation",
        {"annotation_accuracy": acc},
        {},
        acc,
        {"counts": counts, "n_clusters": len(list(match_classes))},
    )
