from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scpilot.errors import EdgeflipScaleError, MetricInputError
from scpilot.metrics import (
    Trajectory,
    cor_dist,
    cor_features,
    edgeflip,
    f1_branches,
    feature_importance,
    trajectory_overall,
)
from scpilot.metrics.trajectory import best_root_importance, sample_cell_pairs

from tests.oracles import edgeflip_exhaustive, pearson_plain


def _linear_traj(cells_at: dict[str, tuple[str, str, float]] | None = None) -> Trajectory:
    """A-B-C path with cells placed at given (u, v, fraction-toward-v)."""
    cells_at = cells_at or {
        "c1": ("A", "B", 0.0),
        "c2": ("A", "B", 0.5),
        "c3": ("B", "C", 0.25),
        "c4": ("B", "C", 1.0),
    }
    positions = {
        cell: ({u: 1.0 - f, v: f} if 0 < f < 1 else {u if f == 0 else v: 1.0})
        for cell, (u, v, f) in cells_at.items()
    }
    return Trajectory(("A", "B", "C"), (("A", "B", 1.0), ("B", "C", 1.0)), positions)


def test_trajectory_requires_connected_network():
    with pytest.raises(MetricInputError):
        Trajectory(("A", "B", "C"), (("A", "B", 1.0),), {"c": {"A": 1.0}})


def test_trajectory_rejects_multi_edge_mixture():
    with pytest.raises(MetricInputError):
        Trajectory(
            ("A", "B", "C"),
            (("A", "B", 1.0), ("B", "C", 1.0)),
            {"c": {"A": 0.5, "C": 0.5}},  # A and C are not adjacent
        )


def test_edgeflip_isomorphic_topologies():
    t1 = _linear_traj()
    relabeled = Trajectory(
        ("X", "Y", "Z"),
        (("X", "Y", 2.0), ("Y", "Z", 3.0)),
        {"c": {"X": 1.0}},
    )
    assert edgeflip(t1, relabeled) == 1.0


def test_edgeflip_path_vs_triangle():
    path = _linear_traj()
    triangle = Trajectory(
        ("A", "B", "C"),
        (("A", "B", 1.0), ("B", "C", 1.0), ("A", "C", 1.0)),
        {"c": {"A": 1.0}},
    )
    # one deletion turns the triangle into the path: 1 - 1/(2+3)
    assert edgeflip(path, triangle) == pytest.approx(0.8)
    assert edgeflip(triangle, path) == pytest.approx(0.8)


def test_edgeflip_scale_bound():
    n = 13
    names = tuple(f"m{i}" for i in range(n))
    edges = tuple((f"m{i}", f"m{i+1}", 1.0) for i in range(n - 1))
    big = Trajectory(names, edges, {"c": {"m0": 1.0}})
    with pytest.raises(EdgeflipScaleError):
        edgeflip(big, big)


def _random_trajectory(rng: np.random.Generator, n_nodes: int) -> Trajectory:
    names = tuple(f"m{i}" for i in range(n_nodes))
    # random spanning tree + a few extra edges
    edges = []
    present = {frozenset()}
    for i in range(1, n_nodes):
        j = int(rng.integers(0, i))
        edges.append((names[j], names[i], float(rng.uniform(0.5, 2.0))))
    existing = {frozenset((u, v)) for u, v, _ in edges}
    for _ in range(int(rng.integers(0, 3))):
        a, b = rng.choice(n_nodes, size=2, replace=False)
        key = frozenset((names[a], names[b]))
        if key not in existing:
            existing.add(key)
            edges.append((names[a], names[b], float(rng.uniform(0.5, 2.0))))
    return Trajectory(names, tuple(edges), {"c": {names[0]: 1.0}})


def test_edgeflip_matches_exhaustive_search_small_graphs():
    rng = np.random.default_rng(42)
    for _ in range(40):
        n1 = int(rng.integers(2, 7))
        n2 = int(rng.integers(2, 7))
        t1 = _random_trajectory(rng, n1)
        t2 = _random_trajectory(rng, n2)
        expected_flips = edgeflip_exhaustive(
            t1.milestones,
            [(u, v) for u, v, _ in t1.edges],
            t2.milestones,
            [(u, v) for u, v, _ in t2.edges],
        )
        denom = len(t1.edges) + len(t2.edges)
        expected = max(1.0 - expected_flips / denom, 0.0) if denom else 1.0
        assert edgeflip(t1, t2) == pytest.approx(expected, abs=1e-12)


def test_f1_branches_identical_assignments():
    t = _linear_traj()
    assert f1_branches(t, t) == 1.0


def test_f1_branches_split_branch_jaccard_table():
    # ref: all four cells on one edge; pred: split across two edges.
    ref = Trajectory(
        ("A", "B"),
        (("A", "B", 1.0),),
        {f"c{i}": {"A": 0.75 - 0.2 * i, "B": 0.25 + 0.2 * i} for i in range(4)},
    )
    pred = _linear_traj(
        {
            "c0": ("A", "B", 0.3),
            "c1": ("A", "B", 0.6),
            "c2": ("B", "C", 0.4),
            "c3": ("B", "C", 0.8),
        }
    )
    # frozen from the Jaccard table: recovery = 1/2, relevance = mean(1/2, 1/2)
    assert f1_branches(ref, pred) == pytest.approx(0.5)


def test_f1_branches_disjoint_assignments():
    # no cell pair shares a branch in both trajectories -> overlap of any
    # ref branch with any pred branch is at most one cell
    ref = _linear_traj(
        {"c1": ("A", "B", 0.5), "c2": ("A", "B", 0.6), "c3": ("B", "C", 0.5), "c4": ("B", "C", 0.6)}
    )
    pred = _linear_traj(
        {"c1": ("A", "B", 0.5), "c3": ("A", "B", 0.6), "c2": ("B", "C", 0.5), "c4": ("B", "C", 0.6)}
    )
    value = f1_branches(ref, pred)
    # each branch pair shares exactly 1 of its 3-cell union: jaccard 1/3
    assert value == pytest.approx(1 / 3)


def test_f1_milestones_flavor():
    t = _linear_traj()
    assert f1_branches(t, t, flavor="milestones") == 1.0


def test_cor_dist_identical():
    t = _linear_traj()
    assert cor_dist(t, t) == pytest.approx(1.0)


def test_cor_dist_scale_invariance():
    t = _linear_traj()
    doubled = Trajectory(
        t.milestones,
        tuple((u, v, 2 * length) for u, v, length in t.edges),
        t.positions,
    )
    assert cor_dist(t, doubled) == pytest.approx(1.0)


def test_cor_dist_detour_shorter_than_shared_edge():
    # long direct edge vs a short detour through D: geodesics must take the min
    traj = Trajectory(
        ("A", "B", "D"),
        (("A", "B", 10.0), ("A", "D", 1.0), ("D", "B", 1.0)),
        {"c1": {"A": 0.9, "B": 0.1}, "c2": {"A": 0.1, "B": 0.9}},
    )
    d = traj.pairwise_geodesics([("c1", "c2")])
    assert d[0] == pytest.approx(min(8.0, 1.0 + 2.0 + 1.0))  # via D: 1 + (1+1) + 1


def test_cor_dist_shuffled_positions_near_neutral():
    rng = np.random.default_rng(5)
    names = tuple(f"m{i}" for i in range(5))
    edges = tuple((names[i], names[i + 1], 1.0) for i in range(4))
    cells = {}
    for i in range(60):
        e = int(rng.integers(0, 4))
        f = float(rng.uniform(0, 1))
        cells[f"c{i}"] = {names[e]: 1 - f, names[e + 1]: f}
    ref = Trajectory(names, edges, cells)
    shuffled_keys = list(cells)
    rng.shuffle(shuffled_keys)
    pred = Trajectory(names, edges, {k: cells[v] for k, v in zip(cells, shuffled_keys)})
    assert cor_dist(ref, pred) == pytest.approx(0.5, abs=0.1)


def test_sample_cell_pairs_exact_and_sampled():
    cells = [f"c{i}" for i in range(10)]
    assert len(sample_cell_pairs(cells)) == 45
    big = [f"c{i}" for i in range(400)]
    pairs = sample_cell_pairs(big, n_pairs=1000, seed=3)
    assert len(pairs) == 1000
    assert pairs == sample_cell_pairs(big, n_pairs=1000, seed=3)
    assert all(a != b for a, b in pairs)


def test_cor_features_identical_and_negated():
    imp = {f"g{i}": float(np.sin(i)) for i in range(10)}
    assert cor_features(imp, imp) == pytest.approx(1.0)
    negated = {k: -v for k, v in imp.items()}
    assert cor_features(imp, negated) == pytest.approx(0.0)


def test_cor_features_random_vector_near_neutral():
    rng = np.random.default_rng(17)
    imp = {f"g{i}": float(v) for i, v in enumerate(rng.normal(size=2000))}
    rand = {f"g{i}": float(v) for i, v in enumerate(rng.normal(size=2000))}
    assert cor_features(imp, rand) == pytest.approx(0.5, abs=0.1)


def test_cor_features_matches_plain_pearson():
    rng = np.random.default_rng(23)
    imp_a = {f"g{i}": float(v) for i, v in enumerate(rng.normal(size=30))}
    imp_b = {f"g{i}": float(v) for i, v in enumerate(rng.normal(size=30))}
    keys = sorted(imp_a)
    r = pearson_plain([imp_a[k] for k in keys], [imp_b[k] for k in keys])
    assert cor_features(imp_a, imp_b) == pytest.approx((r + 1) / 2, abs=1e-9)


def test_wcor_features_weighted_variant():
    imp = {f"g{i}": float(np.cos(i)) for i in range(12)}
    assert cor_features(imp, imp, weighted=True) == pytest.approx(1.0)
    negated = {k: -v for k, v in imp.items()}
    assert cor_features(imp, negated, weighted=True) == pytest.approx(0.0)
    # weighting by reference rank changes the value for partial agreement
    rng = np.random.default_rng(9)
    other = {k: v + float(rng.normal(0, 0.5)) for k, v in imp.items()}
    assert cor_features(imp, other, weighted=True) != pytest.approx(
        cor_features(imp, other, weighted=False), abs=1e-6
    )


def test_cor_features_needs_shared_features():
    with pytest.raises(MetricInputError):
        cor_features({"a": 1.0, "b": 2.0}, {"c": 1.0, "d": 2.0})


def test_feature_importance_monotone_gene():
    t = _linear_traj()
    cells = t.cells()
    pseudotime = t.geodesic_from("A")
    expr = np.array([[pseudotime[c], -pseudotime[c], 1.0] for c in cells])
    imp = feature_importance(t, expr, cells, ["up", "down", "flat"], "A")
    assert imp["up"] == pytest.approx(1.0)
    assert imp["down"] == pytest.approx(-1.0)
    assert imp["flat"] == 0.0


def test_best_root_importance_recovers_reference_root():
    t = _linear_traj()
    cells = t.cells()
    pseudotime = t.geodesic_from("A")
    expr = np.array([[pseudotime[c], 2 - pseudotime[c], 0.5 * pseudotime[c]] for c in cells])
    ref_imp = feature_importance(t, expr, cells, ["a", "b", "c"], "A")
    root, imp = best_root_importance(t, expr, cells, ["a", "b", "c"], ref_imp)
    assert root == "A"
    assert cor_features(ref_imp, imp) == pytest.approx(1.0)


def test_trajectory_overall_geometric_mean():
    assert trajectory_overall(0.8, 0.8, 0.8, 0.8) == pytest.approx(0.8)
    assert trajectory_overall(1, 1, 0.64, 1) == pytest.approx(0.8944, abs=1e-4)
    assert trajectory_overall(1, 0, 1, 1) == 0.0


@settings(max_examples=50, deadline=None)
@given(st.floats(min_value=0.0, max_value=1.0))
def test_trajectory_overall_idempotent_on_equal_inputs(x):
    assert trajectory_overall(x, x, x, x) == pytest.approx(x, abs=1e-12)


def test_trajectory_overall_range_check():
    with pytest.raises(MetricInputError):
        trajectory_overall(1.2, 1, 1, 1)
