"""Partition-agreement metrics (ARI, NMI) and annotation consistency scores."""

from __future__ import annotations

from collections.abc import Iterable, Sequence

import numpy as np

from scpilot.errors import MetricInputError

MATCH_SCORES = {"fully_match": 1.0, "partial_match": 0.5, "mismatch": 0.0}


def annotation_match_score(match_class: str) -> float:
    """Consistency score for one cluster's annotation verdict: 1, 0.5, or 0."""
    try:
        return MATCH_SCORES[match_class]
    except KeyError:
        raise MetricInputError(
            f"unknown match class {match_class!r}; expected one of {sorted(MATCH_SCORES)}"
        ) from None


def annotation_accuracy(match_classes: Iterable[str]) -> float:
    """Arithmetic mean of per-cluster match scores, in [0, 1]."""
    scores = [annotation_match_score(c) for c in match_classes]
    if not scores:
        raise MetricInputError("annotation_accuracy needs at least one cluster")
    return float(np.mean(scores))


def _as_codes(labels: Sequence) -> np.ndarray:
    """Map arbitrary hashable labels to integer codes 0..m-1."""
    arr = np.asarray(labels)
    if arr.ndim != 1:
        raise MetricInputError("label vector must be one-dimensional")
    if arr.size < 2:
        raise MetricInputError("label vector needs at least two entries")
    _, codes = np.unique(arr, return_inverse=True)
    return codes


def contingency(a: Sequence, b: Sequence) -> np.ndarray:
    """Contingency table of two equal-length label vectors."""
    ca, cb = _as_codes(a), _as_codes(b)
    if ca.shape != cb.shape:
        raise MetricInputError(f"label vectors differ in length: {ca.size} vs {cb.size}")
    table = np.zeros((ca.max() + 1, cb.max() + 1), dtype=np.int64)
    np.add.at(table, (ca, cb), 1)
    return table


def _comb2(x: np.ndarray) -> np.ndarray:
    return x * (x - 1) / 2.0


def ari(a: Sequence, b: Sequence) -> float:
    """Adjusted Rand index via the contingency-table formula.

    Symmetric; 1 iff the partitions are identical up to relabeling. Can be
    negative for worse-than-chance agreement (callers aggregating into [0, 1]
    ranges clip it).
    """
    table = contingency(a, b)
    n = table.sum()
    sum_comb = _comb2(table.astype(np.float64)).sum()
    comb_a = _comb2(table.sum(axis=1).astype(np.float64)).sum()
    comb_b = _comb2(table.sum(axis=0).astype(np.float64)).sum()
    total = _comb2(np.float64(n))
    expected = comb_a * comb_b / total
    max_index = (comb_a + comb_b) / 2.0
    if max_index == expected:
        # Degenerate partitions (all-singletons or single-cluster on both sides).
        return 1.0
    return float((sum_comb - expected) / (max_index - expected))


def _entropy(counts: np.ndarray) -> float:
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())


def nmi(a: Sequence, b: Sequence) -> float:
    """Mutual information normalized by the arithmetic mean of entropies.

    Constant-partition conventions: both constant -> 1.0, exactly one
    constant -> 0.0.
    """
    table = contingency(a, b).astype(np.float64)
    n = table.sum()
    ha = _entropy(table.sum(axis=1))
    hb = _entropy(table.sum(axis=0))
    if ha == 0.0 and hb == 0.0:
        return 1.0
    if ha == 0.0 or hb == 0.0:
        return 0.0
    pij = table / n
    outer = np.outer(table.sum(axis=1) / n, table.sum(axis=0) / n)
    mask = pij > 0
    mi = float((pij[mask] * np.log(pij[mask] / outer[mask])).sum())
    value = mi / ((ha + hb) / 2.0)
    return float(min(max(value, 0.0), 1.0))
