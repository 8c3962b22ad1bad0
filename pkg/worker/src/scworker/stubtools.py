"""Seeded stand-ins for the analysis tool catalog (desk-scale mode).

Deterministic fakes with the same shapes as the real methods so generated
code can run in continuous integration without the scientific stack. Full
mode skips preloading this module and relies on the real ecosystem instead.
"""

from __future__ import annotations

import csv
import hashlib
import os

import numpy as np

_METHOD_SEEDS = {
    "scvi_like": 101,
    "harmony_like": 102,
    "combat_like": 103,
    "scanorama_like": 104,
    "liger_like": 105,
}

_LABEL_VOCABULARY = (
    "B cells",
    "T cells",
    "NK cells",
    "Monocytes",
    "Dendritic cells",
    "Plasma cells",
)


def pca(x, n_comps: int = 2) -> np.ndarray:
    """Deterministic PCA scores via SVD of the centered matrix."""
    x = np.asarray(x, dtype=np.float64)
    centered = x - x.mean(axis=0)
    u, s, _ = np.linalg.svd(centered, full_matrices=False)
    return (u * s)[:, : min(n_comps, s.size)]


def batch_correct(x, batches, method: str = "harmony_like", strength: float = 1.0) -> np.ndarray:
    """Fake integration: shrink per-batch centroid offsets in PCA space.

    strength=1 removes the offsets entirely; 0 returns the uncorrected
    embedding. The method name only seeds the jitter, standing in for
    method-to-method variability.
    """
    batches = np.asarray(batches)
    emb = pca(x, n_comps=2)
    rng = np.random.default_rng(_METHOD_SEEDS.get(method, 999))
    global_mean = emb.mean(axis=0)
    corrected = emb.copy()
    for b in np.unique(batches):
        mask = batches == b
        offset = corrected[mask].mean(axis=0) - global_mean
        corrected[mask] -= strength * offset
    corrected += rng.normal(0.0, 0.02, size=corrected.shape)
    return corrected


def trajectory(x, n_segments: int = 2, seed: int = 0):
    """Fake trajectory: order cells along the first principal component.

    Returns (edges, positions): a path network m0-m1-...-m<n> with unit
    lengths and per-cell mixtures over the two milestones of their segment.
    """
    scores = pca(x, n_comps=1)[:, 0]
    order = np.argsort(scores, kind="stable")
    n = len(order)
    edges = [(f"m{i}", f"m{i+1}", 1.0) for i in range(n_segments)]
    positions: dict[int, dict[str, float]] = {}
    for rank, idx in enumerate(order):
        t = rank / max(n - 1, 1) * n_segments  # position along the path
        segment = min(int(t), n_segments - 1)
        frac = t - segment
        if frac <= 1e-9:
            positions[int(idx)] = {f"m{segment}": 1.0}
        else:
            positions[int(idx)] = {f"m{segment}": 1.0 - frac, f"m{segment + 1}": frac}
    return edges, positions


def annotate_clusters(cluster_ids, tool: str = "celltypist_like", seed: int = 0):
    """Fake annotator: stable pseudo-random label per (tool, cluster)."""
    labels = {}
    for cluster in cluster_ids:
        digest = hashlib.md5(f"{tool}|{cluster}|{seed}".encode("utf-8")).digest()
        labels[str(cluster)] = _LABEL_VOCABULARY[digest[0] % len(_LABEL_VOCABULARY)]
    return labels


def save_csv(artifacts_dir: str, name: str, header, rows) -> str:
    path = os.path.join(artifacts_dir, name)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return path


def save_embedding(artifacts_dir: str, name: str, cell_ids, embedding) -> str:
    embedding = np.asarray(embedding)
    rows = [
        [cid] + [f"{v:.6f}" for v in embedding[i]]
        for i, cid in enumerate(cell_ids)
    ]
    header = ["cell_id"] + [f"dim{j+1}" for j in range(embedding.shape[1])]
    return save_csv(artifacts_dir, name, header, rows)
