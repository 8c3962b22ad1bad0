from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scpilot.errors import MetricInputError
from scpilot.metrics import (
    BATCH_REMOVAL_METRICS,
    BIO_CONSERVATION_METRICS,
    Trajectory,
    annotation_report,
    batch_overall,
    batch_report,
    pca_embedding,
    trajectory_report,
)

ALL_TEN = BATCH_REMOVAL_METRICS + BIO_CONSERVATION_METRICS


def test_batch_overall_all_ones():
    assert batch_overall({m: 1.0 for m in ALL_TEN}) == pytest.approx(1.0)


def test_batch_overall_paper_arithmetic():
    values = {m: 0.5 for m in BATCH_REMOVAL_METRICS}
    values.update({m: 1.0 for m in BIO_CONSERVATION_METRICS})
    assert batch_overall(values) == pytest.approx(0.8)


def test_batch_overall_missing_metric_named():
    values = {m: 1.0 for m in ALL_TEN if m != "kbet"}
    with pytest.raises(MetricInputError, match="kbet"):
        batch_overall(values)


def test_batch_overall_range_check():
    values = {m: 1.0 for m in ALL_TEN}
    values["ari"] = -0.2
    with pytest.raises(MetricInputError, match="ari"):
        batch_overall(values)


@settings(max_examples=40, deadline=None)
@given(
    st.dictionaries(st.sampled_from(ALL_TEN), st.floats(0, 1), min_size=10, max_size=10),
    st.sampled_from(ALL_TEN),
    st.floats(0.001, 0.2),
)
def test_batch_overall_monotone_in_each_metric(values, bumped, delta):
    base = batch_overall(values)
    raised = dict(values)
    raised[bumped] = min(1.0, raised[bumped] + delta)
    assert batch_overall(raised) >= base - 1e-12


def _toy_integration(seed=0, batch_shift=0.0):
    """Two cell types; batches offset by `batch_shift` in the embedding."""
    rng = np.random.default_rng(seed)
    n_per = 30
    coords, types, batches = [], [], []
    for t, center in (("T", 0.0), ("B", 8.0)):
        for b, shift in (("b1", 0.0), ("b2", batch_shift)):
            pts = rng.normal(center + shift, 0.4, size=(n_per, 2))
            coords.append(pts)
            types += [t] * n_per
            batches += [b] * n_per
    return np.vstack(coords), np.array(types), np.array(batches)


def test_batch_report_well_mixed_beats_separated():
    before, types, batches = _toy_integration(seed=1, batch_shift=4.0)
    mixed, _, _ = _toy_integration(seed=1, batch_shift=0.05)
    separated, _, _ = _toy_integration(seed=1, batch_shift=4.0)
    good = batch_report(before, mixed, batches, types, k=10)
    bad = batch_report(before, separated, batches, types, k=10)
    assert set(good.per_metric) == set(ALL_TEN)
    assert all(0.0 <= v <= 1.0 for v in good.per_metric.values())
    assert good.overall > bad.overall
    assert good.group_means["batch_removal"] > bad.group_means["batch_removal"]


def test_batch_report_overall_consistent_with_formula():
    before, types, batches = _toy_integration(seed=2, batch_shift=2.0)
    after, _, _ = _toy_integration(seed=2, batch_shift=0.1)
    report = batch_report(before, after, batches, types, k=10)
    assert report.overall == pytest.approx(batch_overall(report.per_metric))


def test_batch_report_permutation_invariant():
    before, types, batches = _toy_integration(seed=3, batch_shift=1.0)
    after, _, _ = _toy_integration(seed=3, batch_shift=0.2)
    perm = np.random.default_rng(4).permutation(len(types))
    a = batch_report(before, after, batches, types, k=10)
    b = batch_report(before[perm], after[perm], batches[perm], types[perm], k=10)
    for name in ALL_TEN:
        assert a.per_metric[name] == pytest.approx(b.per_metric[name], abs=1e-9)


def test_pca_embedding_shape_and_determinism():
    rng = np.random.default_rng(8)
    x = rng.normal(size=(40, 12))
    e1 = pca_embedding(x, n_comps=5)
    e2 = pca_embedding(x, n_comps=5)
    assert e1.shape == (40, 5)
    assert np.array_equal(e1, e2)


def _tiny_trajectories():
    t = Trajectory(
        ("A", "B", "C"),
        (("A", "B", 1.0), ("B", "C", 1.0)),
        {
            "c1": {"A": 1.0},
            "c2": {"A": 0.5, "B": 0.5},
            "c3": {"B": 0.4, "C": 0.6},
            "c4": {"C": 1.0},
        },
    )
    return t, t


def test_trajectory_report_identical_is_one():
    ref, pred = _tiny_trajectories()
    imp = {"g1": 0.9, "g2": -0.4, "g3": 0.1}
    report = trajectory_report(ref, pred, ref_importance=imp, pred_importance=imp)
    assert report.overall == pytest.approx(1.0)
    assert report.per_metric["edgeflip"] == 1.0
    assert report.per_metric["f1_branches"] == 1.0
    assert report.per_metric["f1_milestones"] == 1.0
    assert report.notes["cor_dist_seed"] == 0


def test_trajectory_report_derives_importance_from_expression():
    ref, pred = _tiny_trajectories()
    cells = ref.cells()
    pt = ref.geodesic_from("A")
    expr = np.array([[pt[c], 1 - pt[c], 0.3] for c in cells])
    report = trajectory_report(
        ref, pred, expression=expr, cell_ids=cells, features=["u", "d", "f"], ref_root="A"
    )
    assert report.per_metric["cor_features"] == pytest.approx(1.0)
    assert report.notes["ref_root"] == "A"
    assert "pred_root" in report.notes


def test_trajectory_report_requires_feature_inputs():
    ref, pred = _tiny_trajectories()
    with pytest.raises(MetricInputError):
        trajectory_report(ref, pred)


def test_annotation_report_matches_accuracy():
    classes = ["fully_match"] * 10 + ["partial_match"] * 5 + ["mismatch"]
    report = annotation_report(classes)
    assert report.overall == 0.78125
    assert report.notes["counts"]["fully_match"] == 10
