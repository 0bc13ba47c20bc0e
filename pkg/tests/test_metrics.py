"""Metric tests: every sweep-based metric against a slow loop oracle,
plus the protocol edge cases spelled out in the module docstring."""

import numpy as np
import pytest

from stgad.errors import ContractError, DimensionError
from stgad.metrics import (
    best_f1,
    delay_steps,
    evaluation_report,
    f1_at_threshold,
    point_adjust_f1,
    prc_auc,
    rc_top_k,
    roc_auc,
    segments_from_labels,
)

TOL = 1e-10


def random_instance(rng, n=80, tie_prob=0.5):
    """Scores with deliberate ties and labels with at least one of each class."""
    scores = rng.normal(size=n)
    if rng.random() < tie_prob:
        scores = np.round(scores, 1)  # heavy ties
    labels = np.zeros(n, dtype=np.int8)
    # plant 1-3 segments so the point-adjust protocol has something to credit
    for _ in range(rng.integers(1, 4)):
        start = int(rng.integers(0, n - 5))
        labels[start : start + int(rng.integers(1, 6))] = 1
    if labels.all():
        labels[0] = 0
    return scores, labels


def slow_roc_auc(scores, labels):
    labels = labels.astype(bool)
    pos = scores[labels]
    neg = scores[~labels]
    wins = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                wins += 1.0
            elif p == q:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def slow_prc_auc(scores, labels):
    labels = labels.astype(bool)
    pos = labels.sum()
    auc = 0.0
    prev_recall = 0.0
    for th in sorted(set(scores), reverse=True):
        pred = scores >= th
        tp = int((pred & labels).sum())
        precision = tp / pred.sum()
        recall = tp / pos
        auc += (recall - prev_recall) * precision
        prev_recall = recall
    return auc


def slow_f1_counts(tp, fp, fn):
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def slow_best_f1(scores, labels):
    labels = labels.astype(bool)
    thresholds = list(np.unique(scores)) + [np.max(scores) + 1.0]
    best = None
    for th in thresholds:
        pred = scores >= th
        f1 = slow_f1_counts(
            int((pred & labels).sum()),
            int((pred & ~labels).sum()),
            int((~pred & labels).sum()),
        )
        # exact float comparison: equal values keep the lower threshold
        if best is None or f1 > best[0]:
            best = (f1, th)
    return best


def slow_point_adjust(scores, labels, delay):
    labels = labels.astype(bool)
    segments = segments_from_labels(labels)
    total = sum(e - s + 1 for s, e in segments)
    outside = scores[~labels]
    best = 0.0
    thresholds = list(np.unique(scores)) + [np.max(scores) + 1.0]
    for th in thresholds:
        tp = 0
        for s, e in segments:
            deadline = e if delay is None else min(e, s + delay)
            if scores[s : deadline + 1].max() >= th:
                tp += e - s + 1
        fp = int((outside >= th).sum())
        best = max(best, slow_f1_counts(tp, fp, total - tp))
    return best


class TestRocAuc:
    def test_matches_pair_counting_oracle(self):
        rng = np.random.default_rng(101)
        for _ in range(200):
            scores, labels = random_instance(rng)
            assert roc_auc(scores, labels) == pytest.approx(
                slow_roc_auc(scores, labels), abs=TOL
            )

    def test_perfect_and_inverted(self):
        labels = np.array([0, 0, 1, 1])
        assert roc_auc([1.0, 2.0, 3.0, 4.0], labels) == 1.0
        assert roc_auc([4.0, 3.0, 2.0, 1.0], labels) == 0.0
        assert roc_auc([1.0, 1.0, 1.0, 1.0], labels) == 0.5

    def test_single_class_rejected(self):
        with pytest.raises(ContractError):
            roc_auc([1.0, 2.0], [1, 1])

    def test_bad_labels_rejected(self):
        with pytest.raises(ContractError):
            roc_auc([1.0, 2.0], [0, 2])

    def test_nonfinite_scores_rejected(self):
        with pytest.raises(ContractError):
            roc_auc([np.nan, 2.0], [0, 1])

    def test_shape_mismatch_rejected(self):
        with pytest.raises(DimensionError):
            roc_auc([1.0, 2.0, 3.0], [0, 1])


class TestPrcAuc:
    def test_matches_slow_oracle(self):
        rng = np.random.default_rng(202)
        for _ in range(200):
            scores, labels = random_instance(rng)
            assert prc_auc(scores, labels) == pytest.approx(
                slow_prc_auc(scores, labels), abs=TOL
            )

    def test_perfect_separation(self):
        assert prc_auc([0.0, 0.1, 0.9, 1.0], [0, 0, 1, 1]) == 1.0


class TestBestF1:
    def test_matches_slow_sweep(self):
        rng = np.random.default_rng(303)
        for _ in range(200):
            scores, labels = random_instance(rng)
            got = best_f1(scores, labels)
            want_f1, want_th = slow_best_f1(scores, labels)
            assert got.f1 == pytest.approx(want_f1, abs=TOL)
            assert got.threshold == pytest.approx(want_th, abs=TOL)

    def test_predict_nothing_sentinel(self):
        # every score on a negative point: predicting nothing is best (f1 0)
        scores = np.array([5.0, 4.0, 1.0])
        labels = np.array([0, 0, 1])
        got = best_f1(scores, labels)
        # predicting only >= 1.0 captures the positive plus two negatives
        assert got.f1 == pytest.approx(0.5)

    def test_tie_reports_lowest_threshold(self):
        # thresholds 1.0 and 2.0 both give the same prediction set
        scores = np.array([0.5, 1.0, 2.0, 2.0])
        labels = np.array([0, 0, 1, 1])
        got = best_f1(scores, labels)
        assert got.f1 == 1.0
        assert got.threshold == 2.0

    def test_needs_a_positive(self):
        with pytest.raises(ContractError):
            best_f1([1.0, 2.0], [0, 0])


class TestF1AtThreshold:
    def test_strict_exceedance(self):
        scores = np.array([1.0, 2.0, 3.0])
        labels = np.array([0, 1, 1])
        r = f1_at_threshold(scores, labels, 2.0)
        # only the 3.0 point is predicted
        assert r.precision == 1.0 and r.recall == 0.5

    def test_inclusive_variant(self):
        scores = np.array([1.0, 2.0, 3.0])
        labels = np.array([0, 1, 1])
        r = f1_at_threshold(scores, labels, 2.0, strict=False)
        assert r.recall == 1.0

    def test_zero_over_zero_is_zero(self):
        r = f1_at_threshold([1.0, 1.0], [0, 0], 5.0)
        assert r.f1 == 0.0 and r.precision == 0.0 and r.recall == 0.0


class TestSegmentsFromLabels:
    def test_runs(self):
        assert segments_from_labels([0, 1, 1, 0, 1]) == [(1, 2), (4, 4)]
        assert segments_from_labels([1, 1, 1]) == [(0, 2)]
        assert segments_from_labels([0, 0]) == []

    def test_2d_rejected(self):
        with pytest.raises(DimensionError):
            segments_from_labels(np.zeros((2, 2)))


class TestPointAdjustF1:
    @pytest.mark.parametrize("delay", [0, 1, 3, None])
    def test_matches_slow_sweep(self, delay):
        rng = np.random.default_rng(404)
        for _ in range(200):
            scores, labels = random_instance(rng)
            got = point_adjust_f1(scores, labels, delay)
            assert got.f1 == pytest.approx(
                slow_point_adjust(scores, labels, delay), abs=TOL
            )

    def test_whole_segment_credited(self):
        # one hit on the first step of a 4-long segment credits all 4
        scores = np.array([0.0, 9.0, 0.0, 0.0, 0.0, 0.0])
        labels = np.array([0, 1, 1, 1, 1, 0])
        r = point_adjust_f1(scores, labels, delay=0)
        assert r.recall == 1.0 and r.precision == 1.0

    def test_late_hit_misses_deadline(self):
        # peak is 2 steps into the segment; delay 1 zeroes the segment at
        # the peak threshold, so only the catch-everything threshold is
        # left (f1 0.8 here); delay 2 restores the clean detection
        scores = np.array([0.0, 0.0, 0.0, 9.0, 0.0, 0.0])
        labels = np.array([0, 1, 1, 1, 1, 0])
        tight = point_adjust_f1(scores, labels, delay=1)
        loose = point_adjust_f1(scores, labels, delay=2)
        assert tight.f1 == pytest.approx(0.8)
        assert tight.threshold == 0.0
        assert loose.f1 == 1.0
        assert loose.threshold == 9.0

    def test_late_hits_are_not_false_positives(self):
        # threshold sits below the late in-segment peak; that peak must not
        # count against precision even though its segment is missed
        scores = np.array([0.0, 0.0, 9.0, 0.0, 5.0, 0.0])
        labels = np.array([0, 1, 1, 0, 1, 1])
        r = point_adjust_f1(scores, labels, delay=0)
        # second segment detected on its first step is impossible here: its
        # peak (index 4) is on the deadline (start), so it is detected
        assert r.f1 > 0.0

    def test_monotone_in_delay(self):
        rng = np.random.default_rng(505)
        for _ in range(50):
            scores, labels = random_instance(rng)
            values = [
                point_adjust_f1(scores, labels, d).f1 for d in (0, 1, 3, 7, None)
            ]
            for a, b in zip(values, values[1:]):
                assert b >= a - TOL

    def test_needs_a_segment(self):
        with pytest.raises(ContractError):
            point_adjust_f1([1.0, 2.0], [0, 0], 0)

    def test_negative_delay_rejected(self):
        with pytest.raises(ContractError):
            point_adjust_f1([1.0, 2.0], [0, 1], -1)


class TestDelaySteps:
    def test_conversion(self):
        assert delay_steps(1.0, 60.0) == 1
        assert delay_steps(5.0, 60.0) == 5
        assert delay_steps(1.0, 30.0) == 2
        assert delay_steps(0.0, 60.0) == 0
        # 90-second sampling: 1 minute rounds to one step
        assert delay_steps(1.0, 90.0) == 1

    def test_bad_interval(self):
        with pytest.raises(ContractError):
            delay_steps(1.0, 0.0)


class TestRcTopK:
    def test_hit_counting(self):
        rankings = [("a", "b", "c"), ("c", "b", "a"), ("b", "a", "c")]
        causes = [("a",), ("a",), ("c",)]
        assert rc_top_k(rankings, causes, 1) == pytest.approx(1 / 3)
        assert rc_top_k(rankings, causes, 3) == 1.0

    def test_any_overlap_is_a_hit(self):
        assert rc_top_k([("a", "b")], [("b", "z")], 2) == 1.0

    def test_empty_causes_skipped_with_warning(self):
        with pytest.warns(UserWarning):
            value = rc_top_k([("a",), ("b",)], [(), ("b",)], 1)
        assert value == 1.0

    def test_all_empty_rejected(self):
        with pytest.warns(UserWarning):
            with pytest.raises(ContractError):
                rc_top_k([("a",)], [()], 1)

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            rc_top_k([("a",)], [("a",), ("b",)], 1)


class TestEvaluationReport:
    def test_contains_all_blocks(self):
        rng = np.random.default_rng(606)
        scores, labels = random_instance(rng)
        text = evaluation_report(scores, labels, [0.0, 1.0], 60.0, auto_threshold=0.5)
        for needle in (
            "roc_auc",
            "prc_auc",
            "best_f1",
            "auto_threshold",
            "delay_minutes",
            "unbounded",
        ):
            assert needle in text

    def test_auto_block_optional(self):
        rng = np.random.default_rng(607)
        scores, labels = random_instance(rng)
        text = evaluation_report(scores, labels, [1.0], 60.0)
        assert "auto_threshold" not in text
