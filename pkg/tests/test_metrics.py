from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from stepuq.core import CurvePoint
from stepuq.metrics import (
    AUF1C_GRID,
    CURVE_GRID,
    ScoredStep,
    UndefinedMetric,
    au_f1c,
    auprc,
    auroc,
    confidence_order,
    f1_error_class,
    rejection_curve,
    retained_count,
    score_estimator,
)

from oracles import ap_thresholds, auroc_pairs, f1_counts


def steps_from(u, z):
    """Scored steps whose correctness is ``z`` (ground truth 0, prediction flipped when wrong)."""
    return [ScoredStep(f"c{i:03d}", float(a), 0 if c else 1, 0) for i, (a, c) in enumerate(zip(u, z))]


def test_auroc_example():
    # correct steps at 0.1, 0.4; incorrect at 0.35, 0.8: 3 of 4 pairs ordered
    assert auroc(steps_from([0.1, 0.4, 0.35, 0.8], [1, 1, 0, 0])) == 0.75


def test_auprc_example_is_average_precision():
    s = steps_from([0.1, 0.4, 0.35, 0.8], [1, 1, 0, 0])
    assert auprc(s) == pytest.approx(0.8333333333, abs=1e-9)
    sklearn = pytest.importorskip("sklearn.metrics")
    assert auprc(s) == pytest.approx(sklearn.average_precision_score([1, 1, 0, 0], [-0.1, -0.4, -0.35, -0.8]))


def test_metrics_undefined_for_one_class():
    with pytest.raises(UndefinedMetric):
        auroc(steps_from([0.1, 0.2], [1, 1]))
    with pytest.raises(UndefinedMetric):
        auprc(steps_from([0.1, 0.2], [0, 0]))


def test_all_tied_scores():
    s = steps_from([0.5] * 6, [1, 0, 1, 1, 0, 0])
    assert auroc(s) == 0.5
    assert auprc(s) == 0.5


instances = st.integers(2, 12).flatmap(
    lambda n: st.tuples(
        st.lists(st.sampled_from([0.0, 0.1, 0.25, 0.5, 0.7, 1.0]) | st.floats(0, 1), min_size=n, max_size=n),
        st.lists(st.integers(0, 1), min_size=n, max_size=n),
    )
)


@given(instances)
def test_auroc_matches_pair_enumeration(inst):
    u, z = inst
    assume(0 < sum(z) < len(z))
    assert auroc(steps_from(u, z)) == auroc_pairs(u, z)


@given(instances)
def test_auprc_matches_threshold_enumeration(inst):
    u, z = inst
    assume(0 < sum(z) < len(z))
    assert auprc(steps_from(u, z)) == ap_thresholds(u, z)


@given(instances)
def test_auroc_flip_symmetry(inst):
    u, z = inst
    assume(0 < sum(z) < len(z))
    assert auroc(steps_from(u, z)) + auroc(steps_from([-a for a in u], z)) == pytest.approx(1.0, abs=1e-12)


@given(instances)
def test_metrics_invariant_under_monotone_transform(inst):
    u, z = inst
    assume(0 < sum(z) < len(z))
    levels = sorted(set(u))
    t = [10.0 + levels.index(a) ** 3 for a in u]  # strictly increasing, exact in floats
    assert auroc(steps_from(u, z)) == auroc(steps_from(t, z))
    assert auprc(steps_from(u, z)) == auprc(steps_from(t, z))


@given(st.lists(st.integers(0, 1), min_size=1, max_size=30), st.data())
def test_f1_matches_precision_recall_form(truth, data):
    pred = data.draw(st.lists(st.integers(0, 1), min_size=len(truth), max_size=len(truth)))
    assert f1_error_class(pred, truth) == pytest.approx(f1_counts(pred, truth), abs=1e-12)


@given(st.integers(1, 2000), st.data())
def test_all_ones_f1(n, data):
    k = data.draw(st.integers(1, n))
    truth = [1] * k + [0] * (n - k)
    p = k / n
    assert abs(f1_error_class([1] * n, truth) - 2 * p / (p + 1)) <= 1e-9


def test_all_ones_f1_at_recorded_rate():
    truth = [1] * 129 + [0] * (1152 - 129)
    assert f1_error_class([1] * 1152, truth) == pytest.approx(0.2014051522, abs=1e-10)


def test_retained_count():
    assert retained_count(0.3, 10) == 3
    assert retained_count(0.6, 10) == 6
    assert retained_count(0.64, 10) == 7
    assert retained_count(0.01, 10) == 1
    assert retained_count(1.0, 1152) == 1152


def test_confidence_order_ties_and_nan():
    s = [ScoredStep("b", 0.2, 0, 0), ScoredStep("a", 0.2, 0, 0), ScoredStep("c", math.nan, 0, 0), ScoredStep("d", 0.1, 0, 0)]
    assert [x.case_id for x in confidence_order(s)] == ["d", "a", "b", "c"]


def test_rejection_curve_hand_example():
    # five steps, most confident first: correct positive, wrong, correct positive, wrong, correct negative
    s = [
        ScoredStep("a", 0.1, 1, 1),
        ScoredStep("b", 0.2, 1, 0),
        ScoredStep("c", 0.3, 1, 1),
        ScoredStep("d", 0.4, 0, 1),
        ScoredStep("e", 0.5, 0, 0),
    ]
    pts = rejection_curve(s, (0.4, 0.6, 1.0))
    assert [p.n_retained for p in pts] == [2, 3, 5]
    assert pts[0].f1 == pytest.approx(2 / 3)   # tp1 fp1
    assert pts[1].f1 == pytest.approx(0.8)     # tp2 fp1
    assert pts[2].f1 == pytest.approx(4 / 6)   # tp2 fp1 fn1


def test_curve_grid_display_points():
    assert [round(c * 100) for c in CURVE_GRID] == [60, 64, 68, 72, 76, 80, 84, 88, 92, 96, 100]
    assert AUF1C_GRID[0] == 0.3 and AUF1C_GRID[-1] == 1.0 and len(AUF1C_GRID) == 71


def test_au_f1c_trapezoid():
    curve = [CurvePoint(0.3, 1.0, 3), CurvePoint(0.65, 0.5, 7), CurvePoint(1.0, 0.0, 10)]
    assert au_f1c(curve) == pytest.approx(0.5)
    flat = [CurvePoint(c, 0.4, 1) for c in AUF1C_GRID]
    assert au_f1c(flat) == pytest.approx(0.4)
    with pytest.raises(UndefinedMetric):
        au_f1c([CurvePoint(0.5, 0.4, 1), CurvePoint(1.0, 0.4, 1)])


@given(st.lists(st.tuples(st.floats(0, 1) | st.just(math.nan), st.integers(0, 1), st.integers(0, 1)), min_size=1, max_size=40))
def test_full_coverage_equals_unfiltered_f1(rows):
    s = [ScoredStep(f"c{i}", u, p, y) for i, (u, p, y) in enumerate(rows)]
    full = rejection_curve(s, (1.0,))[0]
    assert full.f1 == f1_error_class([p for _, p, _ in rows], [y for _, _, y in rows])
    assert full.n_retained == len(rows)


def test_perfect_ranking_dominates_random():
    rng = np.random.default_rng(0)
    n = 400
    truth = (rng.random(n) < 0.15).astype(int)
    pred = np.where(rng.random(n) < 0.8, truth, 1 - truth)
    correct = pred == truth
    perfect = [ScoredStep(f"c{i}", 0.0 if correct[i] else 1.0, int(pred[i]), int(truth[i])) for i in range(n)]
    noisy = [ScoredStep(f"c{i}", float(rng.random()), int(pred[i]), int(truth[i])) for i in range(n)]
    assert score_estimator(perfect).auroc == 1.0
    assert score_estimator(perfect).au_f1c > score_estimator(noisy).au_f1c


def test_score_estimator_excludes_nan_from_ranking_metrics():
    s = steps_from([0.1, 0.9, 0.3], [1, 0, 0]) + [ScoredStep("x", math.nan, 1, 1)]
    r = score_estimator(s)
    assert r.auroc == 1.0
    assert r.curve[-1].n_retained == 4
    one_class = score_estimator(steps_from([0.1, 0.2], [1, 1]))
    assert one_class.auroc is None and one_class.auprc is None
