"""Trajectory comparison metrics: topology, branch assignment, geodesic positions,
and feature-importance agreement."""

from __future__ import annotations

import itertools
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components, dijkstra

from scpilot.errors import EdgeflipScaleError, MetricInputError

EDGEFLIP_MAX_MILESTONES = 12

Edge = tuple[str, str, float]


@dataclass(frozen=True)
class Trajectory:
    """A weighted milestone network plus per-cell convex mixtures over milestones.

    Every cell's mixture must be supported on the two endpoints of a single
    network edge (or on a single milestone); mixtures sum to 1.
    """

    milestones: tuple[str, ...]
    edges: tuple[Edge, ...]
    positions: Mapping[str, Mapping[str, float]]

    def __post_init__(self):
        if len(set(self.milestones)) != len(self.milestones) or not self.milestones:
            raise MetricInputError("milestones must be unique and non-empty")
        known = set(self.milestones)
        edge_set = set()
        for u, v, length in self.edges:
            if u == v:
                raise MetricInputError(f"self-loop on milestone {u!r}")
            if u not in known or v not in known:
                raise MetricInputError(f"edge ({u!r}, {v!r}) references unknown milestone")
            if length <= 0:
                raise MetricInputError(f"edge ({u!r}, {v!r}) must have positive length")
            key = frozenset((u, v))
            if key in edge_set:
                raise MetricInputError(f"duplicate edge between {u!r} and {v!r}")
            edge_set.add(key)
        if not self._connected():
            raise MetricInputError("milestone network must be connected")
        for cell, mixture in self.positions.items():
            support = [m for m, pct in mixture.items() if pct > 0]
            if not support or any(m not in known for m in support):
                raise MetricInputError(f"cell {cell!r} has an empty or unknown mixture")
            total = sum(mixture.values())
            if abs(total - 1.0) > 1e-6:
                raise MetricInputError(f"cell {cell!r} mixture sums to {total}, not 1")
            if any(pct < -1e-12 for pct in mixture.values()):
                raise MetricInputError(f"cell {cell!r} has a negative mixture weight")
            if len(support) > 2 or (
                len(support) == 2 and frozenset(support) not in edge_set
            ):
                raise MetricInputError(
                    f"cell {cell!r} is not supported on a single edge or milestone"
                )

    def _connected(self) -> bool:
        if len(self.milestones) == 1:
            return True
        idx = {m: i for i, m in enumerate(self.milestones)}
        rows = [idx[u] for u, v, _ in self.edges] + [idx[v] for u, v, _ in self.edges]
        cols = [idx[v] for u, v, _ in self.edges] + [idx[u] for u, v, _ in self.edges]
        adj = coo_matrix(
            (np.ones(len(rows)), (rows, cols)), shape=(len(self.milestones),) * 2
        )
        n_comp, _ = connected_components(adj, directed=False)
        return n_comp == 1

    # -- derived geometry ---------------------------------------------------

    def topology(self) -> frozenset[frozenset[str]]:
        return frozenset(frozenset((u, v)) for u, v, _ in self.edges)

    def cells(self) -> list[str]:
        return sorted(self.positions)

    def milestone_distances(self) -> tuple[dict[str, int], np.ndarray]:
        """Shortest-path length matrix over the weighted milestone network."""
        idx = {m: i for i, m in enumerate(self.milestones)}
        rows, cols, data = [], [], []
        for u, v, length in self.edges:
            rows += [idx[u], idx[v]]
            cols += [idx[v], idx[u]]
            data += [length, length]
        adj = coo_matrix((data, (rows, cols)), shape=(len(self.milestones),) * 2)
        return idx, dijkstra(adj.tocsr(), directed=False)

    def dominant_edge(self, cell: str) -> tuple[str, str]:
        """The network edge carrying the cell's mixture mass (ties: lexicographic)."""
        mixture = self.positions[cell]
        best, best_mass = None, -1.0
        for u, v, _ in self.edges:
            mass = mixture.get(u, 0.0) + mixture.get(v, 0.0)
            key = tuple(sorted((u, v)))
            if mass > best_mass + 1e-12 or (
                abs(mass - best_mass) <= 1e-12 and (best is None or key < best)
            ):
                best, best_mass = key, mass
        assert best is not None
        return best

    def dominant_milestone(self, cell: str) -> str:
        mixture = self.positions[cell]
        top = max(mixture.values())
        return min(m for m, pct in mixture.items() if abs(pct - top) <= 1e-12)

    def _cell_coordinates(self) -> dict[str, tuple[str, str, float, float]]:
        """Each cell as (u, v, dist_to_u, dist_to_v) along its dominant edge."""
        lengths = {frozenset((u, v)): length for u, v, length in self.edges}
        coords = {}
        for cell in self.positions:
            u, v = self.dominant_edge(cell)
            length = lengths[frozenset((u, v))]
            mixture = self.positions[cell]
            mass_u, mass_v = mixture.get(u, 0.0), mixture.get(v, 0.0)
            total = mass_u + mass_v
            frac_v = mass_v / total if total > 0 else 0.0
            coords[cell] = (u, v, frac_v * length, (1.0 - frac_v) * length)
        return coords

    def geodesic_from(self, root: str) -> dict[str, float]:
        """Geodesic distance of every cell from a root milestone (pseudotime)."""
        if root not in self.milestones:
            raise MetricInputError(f"unknown root milestone {root!r}")
        idx, dist = self.milestone_distances()
        out = {}
        for cell, (u, v, du, dv) in self._cell_coordinates().items():
            out[cell] = float(min(dist[idx[root], idx[u]] + du, dist[idx[root], idx[v]] + dv))
        return out

    def pairwise_geodesics(self, pairs: Sequence[tuple[str, str]]) -> np.ndarray:
        idx, dist = self.milestone_distances()
        lengths = {frozenset((u, v)): length for u, v, length in self.edges}
        coords = self._cell_coordinates()
        out = np.empty(len(pairs))
        for i, (c1, c2) in enumerate(pairs):
            u1, v1, du1, dv1 = coords[c1]
            u2, v2, du2, dv2 = coords[c2]
            best = min(
                du1 + dist[idx[u1], idx[u2]] + du2,
                du1 + dist[idx[u1], idx[v2]] + dv2,
                dv1 + dist[idx[v1], idx[u2]] + du2,
                dv1 + dist[idx[v1], idx[v2]] + dv2,
            )
            if frozenset((u1, v1)) == frozenset((u2, v2)):
                # direct offset along the shared edge can beat any detour
                direct = abs(du1 - du2) if u1 == u2 else abs(du1 - dv2)
                best = min(best, direct)
            out[i] = best
        return out


# -- topology similarity ----------------------------------------------------


def _edge_sets_as_codes(
    topo: frozenset[frozenset[str]], order: Sequence[str]
) -> set[frozenset[int]]:
    idx = {m: i for i, m in enumerate(order)}
    return {frozenset(idx[m] for m in edge) for edge in topo}


def _min_flips(ref: Trajectory, pred: Trajectory) -> int:
    """Minimal edge additions+deletions turning pred's topology into ref's,
    over all node bijections (smaller side padded with isolated nodes)."""
    ref_nodes = sorted(ref.milestones)
    pred_nodes = sorted(pred.milestones)
    size = max(len(ref_nodes), len(pred_nodes))
    if size > EDGEFLIP_MAX_MILESTONES:
        raise EdgeflipScaleError(
            f"{size} milestones exceed the exhaustive-search bound "
            f"({EDGEFLIP_MAX_MILESTONES})"
        )
    ref_nodes += [f"\x00ref{i}" for i in range(size - len(ref_nodes))]
    pred_nodes += [f"\x00pred{i}" for i in range(size - len(pred_nodes))]
    ref_edges = _edge_sets_as_codes(ref.topology(), ref_nodes)
    pred_adj = [[False] * size for _ in range(size)]
    pred_idx = {m: i for i, m in enumerate(pred_nodes)}
    for edge in pred.topology():
        a, b = (pred_idx[m] for m in edge)
        pred_adj[a][b] = pred_adj[b][a] = True
    n_pred_edges = len(pred.topology())

    best = len(ref_edges) + n_pred_edges  # delete everything, add everything

    # Depth-first over assignments pred-node -> ref-slot, counting disagreements
    # among already-assigned pairs; the running count only grows, so it prunes.
    assignment = [-1] * size
    used = [False] * size

    def descend(depth: int, cost: int) -> None:
        nonlocal best
        if cost >= best:
            return
        if depth == size:
            best = cost
            return
        for slot in range(size):
            if used[slot]:
                continue
            added = 0
            for prev in range(depth):
                has_pred = pred_adj[depth][prev]
                has_ref = frozenset((slot, assignment[prev])) in ref_edges
                if has_pred != has_ref:
                    added += 1
                    if cost + added >= best:
                        break
            if cost + added < best:
                assignment[depth] = slot
                used[slot] = True
                descend(depth + 1, cost + added)
                used[slot] = False
        assignment[depth] = -1

    descend(0, 0)
    return best


def edgeflip(ref: Trajectory, pred: Trajectory) -> float:
    """Topology similarity: 1 - flips / (|E_ref| + |E_pred|), floored at 0."""
    flips = _min_flips(ref, pred)
    denom = len(ref.topology()) + len(pred.topology())
    if denom == 0:
        return 1.0
    return float(max(1.0 - flips / denom, 0.0))


# -- branch assignment ------------------------------------------------------


def _branch_groups(traj: Trajectory, flavor: str) -> dict[object, set[str]]:
    groups: dict[object, set[str]] = {}
    for cell in traj.positions:
        key = traj.dominant_edge(cell) if flavor == "branches" else traj.dominant_milestone(cell)
        groups.setdefault(key, set()).add(cell)
    return groups


def _jaccard(a: set, b: set) -> float:
    union = len(a | b)
    return len(a & b) / union if union else 0.0


def f1_branches(ref: Trajectory, pred: Trajectory, flavor: str = "branches") -> float:
    """Harmonic mean of branch recovery and relevance.

    Recovery: mean over ref branches of the best Jaccard overlap with any pred
    branch; relevance is the symmetric counterpart. flavor="milestones" groups
    cells by dominant milestone instead of dominant edge.
    """
    if flavor not in ("branches", "milestones"):
        raise MetricInputError(f"unknown f1 flavor {flavor!r}")
    if set(ref.positions) != set(pred.positions):
        raise MetricInputError("ref and pred cover different cell sets")
    ref_groups = _branch_groups(ref, flavor)
    pred_groups = _branch_groups(pred, flavor)
    if not ref_groups or not pred_groups:
        raise MetricInputError("empty branch sets")
    recovery = float(
        np.mean([max(_jaccard(r, p) for p in pred_groups.values()) for r in ref_groups.values()])
    )
    relevance = float(
        np.mean([max(_jaccard(p, r) for r in ref_groups.values()) for p in pred_groups.values()])
    )
    if recovery + relevance == 0.0:
        return 0.0
    return 2.0 * recovery * relevance / (recovery + relevance)


# -- cellular positions -----------------------------------------------------


def _pearson01(x: np.ndarray, y: np.ndarray) -> tuple[float, bool]:
    """Pearson r mapped to [0, 1] via (r+1)/2; (0.5, True) for constant input."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.std() == 0.0 or y.std() == 0.0:
        return 0.5, True
    r = float(np.corrcoef(x, y)[0, 1])
    return (r + 1.0) / 2.0, False


def sample_cell_pairs(
    cells: Sequence[str], max_exact: int = 300, n_pairs: int = 50_000, seed: int = 0
) -> list[tuple[str, str]]:
    """All unordered pairs for small n, else seeded random pairs."""
    cells = list(cells)
    n = len(cells)
    if n < 2:
        raise MetricInputError("need at least two cells")
    if n <= max_exact:
        return list(itertools.combinations(cells, 2))
    rng = np.random.default_rng(seed)
    first = rng.integers(0, n, size=n_pairs)
    second = rng.integers(0, n - 1, size=n_pairs)
    second = np.where(second >= first, second + 1, second)  # avoid i == j
    return [(cells[i], cells[j]) for i, j in zip(first, second)]


def cor_dist(
    ref: Trajectory,
    pred: Trajectory,
    max_exact: int = 300,
    n_pairs: int = 50_000,
    seed: int = 0,
) -> float:
    """Correlation of pairwise cell geodesics between the two trajectories,
    mapped to [0, 1]. Constant distance vectors score a neutral 0.5."""
    if set(ref.positions) != set(pred.positions):
        raise MetricInputError("ref and pred cover different cell sets")
    pairs = sample_cell_pairs(ref.cells(), max_exact, n_pairs, seed)
    score, _ = _pearson01(ref.pairwise_geodesics(pairs), pred.pairwise_geodesics(pairs))
    return score


# -- feature importance -----------------------------------------------------


def feature_importance(
    traj: Trajectory,
    expression: np.ndarray,
    cell_ids: Sequence[str],
    features: Sequence[str],
    root: str,
) -> dict[str, float]:
    """Per-feature Pearson correlation of expression with geodesic pseudotime
    from `root`. Constant columns (or constant pseudotime) score 0."""
    expression = np.asarray(expression, dtype=np.float64)
    if expression.shape != (len(cell_ids), len(features)):
        raise MetricInputError("expression shape does not match cells × features")
    pseudotime = traj.geodesic_from(root)
    try:
        t = np.array([pseudotime[c] for c in cell_ids])
    except KeyError as exc:
        raise MetricInputError(f"cell {exc.args[0]!r} missing from trajectory") from None
    out = {}
    t_std = t.std()
    for j, name in enumerate(features):
        col = expression[:, j]
        if t_std == 0.0 or col.std() == 0.0:
            out[name] = 0.0
        else:
            out[name] = float(np.corrcoef(col, t)[0, 1])
    return out


def best_root_importance(
    traj: Trajectory,
    expression: np.ndarray,
    cell_ids: Sequence[str],
    features: Sequence[str],
    ref_importance: Mapping[str, float],
) -> tuple[str, dict[str, float]]:
    """Importance under the root milestone that maximizes agreement with the
    reference importances (predicted trajectories carry no canonical root)."""
    best_root, best_imp, best_score = None, None, -np.inf
    for root in sorted(traj.milestones):
        imp = feature_importance(traj, expression, cell_ids, features, root)
        score = cor_features(ref_importance, imp)
        if score > best_score:
            best_root, best_imp, best_score = root, imp, score
    assert best_imp is not None
    return best_root, best_imp


def cor_features(
    ref_importance: Mapping[str, float],
    pred_importance: Mapping[str, float],
    weighted: bool = False,
) -> float:
    """Agreement of two feature-importance vectors, mapped to [0, 1].

    weighted=True ranks features by |ref importance| (descending) and applies
    linearly decaying rank weights (the weighted-correlation variant)."""
    shared = sorted(set(ref_importance) & set(pred_importance))
    if len(shared) < 3:
        raise MetricInputError(f"only {len(shared)} shared features; need at least 3")
    x = np.array([ref_importance[f] for f in shared])
    y = np.array([pred_importance[f] for f in shared])
    if not weighted:
        score, _ = _pearson01(x, y)
        return score
    order = np.argsort(-np.abs(x), kind="stable")
    weights = np.empty(len(shared))
    weights[order] = np.arange(len(shared), 0, -1, dtype=np.float64)
    weights /= weights.sum()
    mx, my = (weights * x).sum(), (weights * y).sum()
    cov = (weights * (x - mx) * (y - my)).sum()
    vx = (weights * (x - mx) ** 2).sum()
    vy = (weights * (y - my) ** 2).sum()
    if vx == 0.0 or vy == 0.0:
        return 0.5
    return float((cov / np.sqrt(vx * vy) + 1.0) / 2.0)


def trajectory_overall(
    edgeflip_score: float, f1_branches_score: float, cor_dist_score: float, cor_features_score: float
) -> float:
    """Geometric mean of the four trajectory metrics; 0 if any component is 0."""
    values = [edgeflip_score, f1_branches_score, cor_dist_score, cor_features_score]
    for name, v in zip(("edgeflip", "f1_branches", "cor_dist", "cor_features"), values):
        if v is None:
            raise MetricInputError(f"missing trajectory component {name}")
        if not (0.0 <= v <= 1.0):
            raise MetricInputError(f"trajectory component {name}={v} outside [0, 1]")
    if min(values) == 0.0:
        return 0.0
    return float(np.prod(values) ** 0.25)
