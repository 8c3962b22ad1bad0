"""Embedding-space metrics: silhouette flavors, isolated labels, PC regression."""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np
from scipy.spatial.distance import cdist

from scpilot.errors import MetricInputError


def _check_embedding(coords: np.ndarray, labels: Sequence) -> tuple[np.ndarray, np.ndarray]:
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim == 1:
        coords = coords[:, None]
    labels = np.asarray(labels)
    if coords.ndim != 2 or coords.shape[0] != labels.shape[0]:
        raise MetricInputError(
            f"embedding rows ({coords.shape[0]}) and labels ({labels.shape[0]}) disagree"
        )
    if not np.isfinite(coords).all():
        raise MetricInputError("embedding contains non-finite entries")
    return coords, labels


def silhouette_samples(coords: np.ndarray, labels: Sequence) -> np.ndarray:
    """Per-point silhouette widths s(i) = (b - a) / max(a, b).

    Points in singleton clusters get s = 0 by convention, as do points whose
    a and b are both zero (coincident data).
    """
    coords, labels = _check_embedding(coords, labels)
    dist = cdist(coords, coords)
    uniq = np.unique(labels)
    if uniq.size < 2:
        return np.zeros(coords.shape[0])
    masks = {lab: labels == lab for lab in uniq}
    counts = {lab: int(m.sum()) for lab, m in masks.items()}
    s = np.zeros(coords.shape[0])
    for lab in uniq:
        mask = masks[lab]
        if counts[lab] == 1:
            continue  # singleton: s stays 0
        within = dist[np.ix_(mask, mask)]
        a = within.sum(axis=1) / (counts[lab] - 1)
        b = np.full(counts[lab], np.inf)
        for other in uniq:
            if other == lab:
                continue
            b = np.minimum(b, dist[np.ix_(mask, masks[other])].mean(axis=1))
        denom = np.maximum(a, b)
        with np.errstate(invalid="ignore"):
            si = np.where(denom > 0, (b - a) / denom, 0.0)
        s[mask] = si
    return s


def asw(
    coords: np.ndarray,
    labels: Sequence,
    flavor: str = "cell",
    groups: Sequence | None = None,
) -> float:
    """Average silhouette width, rescaled to [0, 1].

    flavor="cell": mean silhouette of `labels` (cell types), mapped via (s+1)/2.
    flavor="batch": batch-mixing form — within each group of `groups`
    (cell types), silhouette of `labels` (batches) is computed and 1 - |s| is
    averaged; group means are then averaged. Groups with a single batch are
    skipped.
    """
    coords, labels = _check_embedding(coords, labels)
    if flavor == "cell":
        if np.unique(labels).size < 2:
            raise MetricInputError("asw flavor=cell needs at least two labels")
        return float((silhouette_samples(coords, labels).mean() + 1.0) / 2.0)
    if flavor == "batch":
        if groups is None:
            raise MetricInputError("asw flavor=batch needs per-cell group labels")
        groups = np.asarray(groups)
        if groups.shape[0] != labels.shape[0]:
            raise MetricInputError("groups and labels disagree in length")
        group_scores = []
        for g in np.unique(groups):
            mask = groups == g
            if np.unique(labels[mask]).size < 2:
                continue  # single batch in this group: silhouette undefined
            s = silhouette_samples(coords[mask], labels[mask])
            group_scores.append(float((1.0 - np.abs(s)).mean()))
        if not group_scores:
            raise MetricInputError("no group contains more than one batch")
        return float(np.mean(group_scores))
    raise MetricInputError(f"unknown asw flavor {flavor!r}")


def isolated_labels(cell_types: Sequence, batches: Sequence) -> list:
    """Cell types present in the fewest batches (possibly the whole set on a tie)."""
    cell_types = np.asarray(cell_types)
    batches = np.asarray(batches)
    if cell_types.shape != batches.shape:
        raise MetricInputError("cell_types and batches disagree in length")
    presence = {
        lab: np.unique(batches[cell_types == lab]).size for lab in np.unique(cell_types)
    }
    fewest = min(presence.values())
    return [lab for lab, count in presence.items() if count == fewest]


def isolated_label_score(
    coords: np.ndarray, cell_types: Sequence, batches: Sequence
) -> float:
    """Silhouette-based score of the isolated label(s) against all other cells.

    For each isolated label, cells are split into a binary partition
    (label vs rest); the mean silhouette over the label's own cells is
    rescaled via (s+1)/2. Ties for fewest batches are averaged.
    """
    coords, cell_types = _check_embedding(coords, cell_types)
    iso = isolated_labels(cell_types, batches)
    scores = []
    for lab in iso:
        binary = np.where(cell_types == lab, 1, 0)
        if np.unique(binary).size < 2:
            scores.append(0.5)  # the label is the whole dataset: neutral
            continue
        s = silhouette_samples(coords, binary)
        scores.append(float((s[binary == 1].mean() + 1.0) / 2.0))
    return float(np.mean(scores))


def _one_hot(labels: Sequence) -> np.ndarray:
    codes = np.unique(np.asarray(labels), return_inverse=True)[1]
    onehot = np.zeros((codes.size, codes.max() + 1))
    onehot[np.arange(codes.size), codes] = 1.0
    return onehot


def batch_variance_fraction(coords: np.ndarray, batches: Sequence, n_comps: int = 50) -> float:
    """Variance-weighted R² of principal components against batch indicators.

    PCA is computed on the centered matrix; each component's mean squared
    correlation with the batch one-hot columns is weighted by the component's
    variance share.
    """
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim == 1:
        coords = coords[:, None]
    onehot = _one_hot(batches)
    if onehot.shape[0] != coords.shape[0]:
        raise MetricInputError("embedding rows and batch labels disagree")
    centered = coords - coords.mean(axis=0)
    u, sing, _ = np.linalg.svd(centered, full_matrices=False)
    var = sing**2
    keep = var > var.max() * 1e-12 if var.size and var.max() > 0 else np.zeros(0, dtype=bool)
    if not keep.any():
        return 0.0
    var = var[:keep.sum()][: n_comps]
    pcs = (u * sing)[:, : var.size]
    onehot_c = onehot - onehot.mean(axis=0)
    onehot_norm = np.sqrt((onehot_c**2).sum(axis=0))
    r2 = np.zeros(var.size)
    for i in range(var.size):
        pc = pcs[:, i] - pcs[:, i].mean()
        pc_norm = np.sqrt((pc**2).sum())
        if pc_norm == 0:
            continue
        with np.errstate(invalid="ignore", divide="ignore"):
            r = (onehot_c.T @ pc) / (onehot_norm * pc_norm)
        r = np.nan_to_num(r)
        r2[i] = float((r**2).mean())
    return float((r2 * var).sum() / var.sum())


def pcr_comparison(
    embedding_before: np.ndarray,
    embedding_after: np.ndarray,
    batches: Sequence,
    n_comps: int = 50,
) -> float:
    """Reduction of batch-explained principal-component variance, clamped to [0, 1].

    Returns 0 (nothing to remove) when the before-embedding carries no batch
    variance at all.
    """
    before = np.asarray(embedding_before, dtype=np.float64)
    after = np.asarray(embedding_after, dtype=np.float64)
    if before.shape[0] != after.shape[0]:
        raise MetricInputError("before/after embeddings cover different cells")
    var_before = batch_variance_fraction(before, batches, n_comps)
    var_after = batch_variance_fraction(after, batches, n_comps)
    if var_before <= 0.0:
        return 0.0
    return float(min(max((var_before - var_after) / var_before, 0.0), 1.0))
