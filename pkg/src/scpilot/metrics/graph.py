"""Neighborhood-graph metrics: LISI flavors, kBET, graph connectivity."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import cdist
from scipy.stats import chi2

from scpilot.errors import MetricInputError


@dataclass(frozen=True)
class NeighborGraph:
    """Per-cell neighbor lists of uniform size k (self excluded)."""

    indices: np.ndarray  # (n, k) integer array

    def __post_init__(self):
        idx = np.asarray(self.indices)
        if idx.ndim != 2:
            raise MetricInputError("neighbor lists must form an (n, k) array")
        n, k = idx.shape
        if not (0 < k < n):
            raise MetricInputError(f"need 0 < k < n, got k={k}, n={n}")
        if (idx == np.arange(n)[:, None]).any():
            raise MetricInputError("neighbor lists may not contain self-neighbors")
        if idx.min() < 0 or idx.max() >= n:
            raise MetricInputError("neighbor index out of range")
        object.__setattr__(self, "indices", idx.astype(np.int64))

    @property
    def n(self) -> int:
        return self.indices.shape[0]

    @property
    def k(self) -> int:
        return self.indices.shape[1]

    def adjacency(self) -> sparse.csr_matrix:
        """Symmetrized adjacency matrix (i ~ j if either lists the other)."""
        n, k = self.indices.shape
        rows = np.repeat(np.arange(n), k)
        cols = self.indices.ravel()
        data = np.ones(rows.size)
        a = sparse.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()
        return ((a + a.T) > 0).astype(np.int8)


def knn_graph(coords: np.ndarray, k: int) -> NeighborGraph:
    """Brute-force Euclidean k-nearest-neighbor lists (deterministic tie order)."""
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim == 1:
        coords = coords[:, None]
    n = coords.shape[0]
    if not (0 < k < n):
        raise MetricInputError(f"need 0 < k < n, got k={k}, n={n}")
    dist = cdist(coords, coords)
    np.fill_diagonal(dist, np.inf)
    order = np.argsort(dist, axis=1, kind="stable")
    return NeighborGraph(order[:, :k])


def _neighbor_label_counts(graph: NeighborGraph, codes: np.ndarray, m: int) -> np.ndarray:
    """(n, m) counts of each label code among each cell's neighbors."""
    neigh = codes[graph.indices]  # (n, k)
    counts = np.zeros((graph.n, m), dtype=np.float64)
    rows = np.repeat(np.arange(graph.n), graph.k)
    np.add.at(counts, (rows, neigh.ravel()), 1.0)
    return counts


def lisi(graph: NeighborGraph, labels: Sequence, flavor: str) -> float:
    """Mean per-cell inverse Simpson index of neighborhood label proportions,
    min-max normalized to [0, 1].

    flavor="ilisi_batch": (L-1)/(B-1), higher = better batch mixing.
    flavor="clisi_cell": (C-L)/(C-1), higher = better cell-type separation.
    """
    labels = np.asarray(labels)
    if labels.shape[0] != graph.n:
        raise MetricInputError("labels and graph cover different cells")
    uniq, codes = np.unique(labels, return_inverse=True)
    m = uniq.size
    if m < 2:
        raise MetricInputError("lisi needs at least two distinct labels")
    props = _neighbor_label_counts(graph, codes, m) / graph.k
    simpson = (props**2).sum(axis=1)
    mean_l = float((1.0 / simpson).mean())
    if flavor == "ilisi_batch":
        value = (mean_l - 1.0) / (m - 1.0)
    elif flavor == "clisi_cell":
        value = (m - mean_l) / (m - 1.0)
    else:
        raise MetricInputError(f"unknown lisi flavor {flavor!r}")
    return float(min(max(value, 0.0), 1.0))


def kbet(
    graph: NeighborGraph,
    batches: Sequence,
    groups: Sequence | None = None,
    alpha: float = 0.05,
) -> float:
    """Chi-square acceptance rate of local vs global batch composition.

    Each cell's neighborhood batch counts are tested against the global batch
    proportions (dof = B-1) at significance `alpha`; the score is the fraction
    of cells whose test is NOT rejected, averaged per cell-type group and then
    across groups. Simplified form without neighborhood-size optimization;
    the chi-square approximation assumes k of roughly 10 or more.
    """
    batches = np.asarray(batches)
    if batches.shape[0] != graph.n:
        raise MetricInputError("batch labels and graph cover different cells")
    uniq, codes = np.unique(batches, return_inverse=True)
    b = uniq.size
    if b < 2:
        raise MetricInputError("kbet needs at least two batches")
    global_props = np.bincount(codes, minlength=b) / codes.size
    observed = _neighbor_label_counts(graph, codes, b)
    expected = graph.k * global_props
    stat = ((observed - expected) ** 2 / expected).sum(axis=1)
    pvals = chi2.sf(stat, df=b - 1)
    accepted = pvals >= alpha
    if groups is None:
        return float(accepted.mean())
    groups = np.asarray(groups)
    if groups.shape[0] != graph.n:
        raise MetricInputError("groups and graph cover different cells")
    rates = [float(accepted[groups == g].mean()) for g in np.unique(groups)]
    return float(np.mean(rates))


def graph_connectivity(graph: NeighborGraph, cell_types: Sequence) -> float:
    """Mean over cell types of |largest connected component| / |type|."""
    cell_types = np.asarray(cell_types)
    if cell_types.shape[0] != graph.n:
        raise MetricInputError("cell-type labels and graph cover different cells")
    adjacency = graph.adjacency()
    scores = []
    for lab in np.unique(cell_types):
        mask = cell_types == lab
        size = int(mask.sum())
        if size == 0:
            continue
        sub = adjacency[np.ix_(np.flatnonzero(mask), np.flatnonzero(mask))]
        _, comp = connected_components(sub, directed=False)
        largest = int(np.bincount(comp).max())
        scores.append(largest / size)
    if not scores:
        raise MetricInputError("no non-empty cell types")
    return float(np.mean(scores))
