"""Tests for correlation, peak finding, matching, rewards, and metrics."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smf.errors import DataError
from smf.signal_ops import (
    DetectionOutcome,
    correlate,
    find_peaks,
    match_peaks,
    metrics,
    normalize_maxabs,
    reward_f1,
    reward_linear,
    sum_outcomes,
)

from helpers import two_peak_trap, two_stage_templates


# -- independent oracles ----------------------------------------------------


def brute_correlate(x, a):
    """Direct transcription of the sliding-sum formula with explicit bounds."""
    length, h = len(x), len(a)
    center = h // 2
    y = np.zeros(length)
    for n in range(length):
        total = 0.0
        for k in range(h):
            idx = n + k - center
            if 0 <= idx < length:
                total += a[k] * x[idx]
        y[n] = total
    return y


def brute_find_peaks(x, height, distance):
    """Rule-by-rule reference: plateau runs, height filter, greedy distance."""
    n = len(x)
    candidates = []
    i = 0
    while i < n:
        j = i
        while j + 1 < n and x[j + 1] == x[i]:
            j += 1
        if i > 0 and j < n - 1 and x[i - 1] < x[i] and x[j + 1] < x[i]:
            candidates.append((i + j) // 2)
        i = j + 1
    candidates = [c for c in candidates if x[c] >= height]
    dead = set()
    kept = []
    for c in sorted(candidates, key=lambda c: (-x[c], c)):
        if c in dead:
            continue
        kept.append(c)
        for other in candidates:
            if other != c and abs(other - c) < distance:
                dead.add(other)
    return sorted(kept)


# -- correlate ----------------------------------------------------------------


class TestCorrelate:
    def test_identity_template(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal(250)
        a = np.zeros(8)
        a[4] = 1.0  # delta at floor(H/2)
        np.testing.assert_array_equal(correlate(x, a), x)

    def test_hand_example(self):
        x = np.array([0.0, 0.0, 1.0, 0.0, 0.0])
        a = np.array([1.0, 1.0])  # H=2, center=1: y(n) = x(n-1) + x(n)
        np.testing.assert_array_equal(correlate(x, a), [0.0, 0.0, 1.0, 1.0, 0.0])

    @pytest.mark.parametrize("h", [4, 8, 12, 16])
    def test_matches_brute_force(self, h):
        rng = np.random.default_rng(h)
        for _ in range(25):
            x = rng.standard_normal(250)
            a = rng.standard_normal(h)
            np.testing.assert_allclose(correlate(x, a), brute_correlate(x, a), atol=1e-12)

    def test_linearity_in_template(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal(250)
        a = rng.standard_normal(8)
        for c in (-2.5, 0.0, 0.3, 7.0):
            np.testing.assert_allclose(correlate(x, c * a), c * correlate(x, a), atol=1e-12)

    def test_shift_consistency(self):
        rng = np.random.default_rng(2)
        base = rng.standard_normal(200)
        h = 9
        a = rng.standard_normal(h)
        shift = 13
        x = np.zeros(250)
        x[:200] = base
        x_shifted = np.zeros(250)
        x_shifted[shift:shift + 200] = base
        y = correlate(x, a)
        y_shifted = correlate(x_shifted, a)
        # interior indices: both windows fully inside the nonzero supports
        np.testing.assert_allclose(
            y_shifted[shift + h:shift + 200 - h], y[h:200 - h], atol=1e-12
        )


class TestNormalize:
    def test_arithmetic(self):
        np.testing.assert_array_equal(
            normalize_maxabs(np.array([0.0, -2.0, 4.0])), [0.0, -0.5, 1.0]
        )

    def test_all_zero_unchanged(self):
        np.testing.assert_array_equal(normalize_maxabs(np.zeros(5)), np.zeros(5))

    def test_idempotent(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal(100) * 17.0
        once = normalize_maxabs(x)
        np.testing.assert_array_equal(normalize_maxabs(once), once)

    def test_pipeline_scale_invariance(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal(250)
        a = rng.standard_normal(8)
        for c in (0.01, 3.0, 250.0):
            lhs = find_peaks(normalize_maxabs(correlate(x, c * a)))
            rhs = find_peaks(normalize_maxabs(correlate(x, a)))
            assert lhs == rhs


# -- find_peaks ---------------------------------------------------------------


class TestFindPeaks:
    def test_single_peak(self):
        x = np.zeros(250)
        x[1] = 1.0
        assert find_peaks(x, height=0.5, distance=30) == [1]

    def test_greedy_distance_rule(self):
        x = np.zeros(250)
        x[40] = 0.9
        x[60] = 0.8
        assert find_peaks(x, height=0.5, distance=30) == [40]

    def test_peaks_exactly_distance_apart_coexist(self):
        x = np.zeros(250)
        x[40] = 0.9
        x[70] = 0.8
        assert find_peaks(x, height=0.5, distance=30) == [40, 70]

    def test_plateau_midpoint_left_biased(self):
        x = np.zeros(20)
        x[5:9] = 1.0  # even plateau 5..8 -> midpoint 6
        assert find_peaks(x, height=0.5, distance=1) == [6]
        x2 = np.zeros(20)
        x2[5:10] = 1.0  # odd plateau 5..9 -> midpoint 7
        assert find_peaks(x2, height=0.5, distance=1) == [7]

    def test_edges_never_peaks(self):
        x = np.zeros(10)
        x[0] = 5.0
        x[9] = 5.0
        assert find_peaks(x, height=0.5, distance=1) == []

    def test_distance_validation(self):
        with pytest.raises(DataError):
            find_peaks(np.zeros(10), distance=0)

    @settings(max_examples=300, deadline=None)
    @given(
        st.lists(st.integers(-10, 10), min_size=3, max_size=60),
        st.integers(1, 12),
        st.sampled_from([0.1, 0.3, 0.5]),
    )
    def test_matches_brute_force(self, values, distance, height):
        x = np.array(values, dtype=np.float64) / 10.0  # quantized: plateaus occur
        assert find_peaks(x, height, distance) == brute_find_peaks(x, height, distance)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.integers(-10, 10), min_size=3, max_size=80), st.integers(1, 15))
    def test_output_invariants(self, values, distance):
        x = np.array(values, dtype=np.float64) / 10.0
        peaks = find_peaks(x, 0.5, distance)
        assert peaks == sorted(peaks)
        assert all(b - a >= distance for a, b in zip(peaks, peaks[1:]))
        assert all(x[p] >= 0.5 for p in peaks)


# -- match_peaks --------------------------------------------------------------


class TestMatchPeaks:
    def test_identical_lists(self):
        truth = [10, 60, 120]
        out = match_peaks(truth, truth, tol=5)
        assert (out.tp, out.fp, out.fn) == (3, 0, 0)
        assert out.matches == [(10, 10), (60, 60), (120, 120)]

    def test_within_tolerance(self):
        out = match_peaks([10], [14], tol=5)
        assert (out.tp, out.fp, out.fn) == (1, 0, 0)

    def test_greedy_by_distance(self):
        out = match_peaks([10, 12], [11], tol=5)
        assert (out.tp, out.fp, out.fn) == (1, 1, 0)
        assert out.matches == [(10, 11)]

    def test_tie_prefers_earlier_truth(self):
        out = match_peaks([10], [8, 12], tol=5)
        assert out.matches == [(10, 8)]
        assert (out.tp, out.fp, out.fn) == (1, 0, 1)

    def test_unsorted_rejected(self):
        with pytest.raises(DataError):
            match_peaks([5, 3], [1], tol=5)
        with pytest.raises(DataError):
            match_peaks([1], [5, 3], tol=5)

    @settings(max_examples=300, deadline=None)
    @given(
        st.lists(st.integers(0, 249), unique=True, max_size=10).map(sorted),
        st.lists(st.integers(0, 249), unique=True, max_size=10).map(sorted),
        st.integers(0, 8),
    )
    def test_count_identities(self, pred, truth, tol):
        out = match_peaks(pred, truth, tol=tol)
        assert out.tp == len(out.matches)
        assert out.tp + out.fp == len(pred)
        assert out.tp + out.fn == len(truth)
        matched_preds = [p for p, _ in out.matches]
        matched_truths = [t for _, t in out.matches]
        assert len(set(matched_preds)) == len(matched_preds)
        assert len(set(matched_truths)) == len(matched_truths)
        assert all(abs(p - t) <= tol for p, t in out.matches)


# -- rewards and metrics -------------------------------------------------------


class TestRewards:
    @pytest.mark.parametrize("tp,fp,fn,expected", [(2, 0, 0, 20.0), (0, 1, 2, -15.0), (2, 1, 1, 10.0)])
    def test_linear(self, tp, fp, fn, expected):
        assert reward_linear(DetectionOutcome(tp, fp, fn)) == expected

    @pytest.mark.parametrize("tp,fp,fn,expected", [(1, 0, 0, 1.0), (0, 0, 0, 0.0), (2, 1, 1, 2.0 / 3.0)])
    def test_f1(self, tp, fp, fn, expected):
        assert reward_f1(DetectionOutcome(tp, fp, fn)) == pytest.approx(expected)


class TestMetrics:
    def test_perfect_precision(self):
        p, _, _ = metrics(DetectionOutcome(tp=9902, fp=0, fn=175))
        assert p == 1.0

    def test_mixed(self):
        assert metrics(DetectionOutcome(1, 1, 0)) == pytest.approx((0.5, 1.0, 2.0 / 3.0))

    def test_degenerate_zero(self):
        assert metrics(DetectionOutcome(0, 0, 0)) == (0.0, 0.0, 0.0)

    def test_micro_average_sums_counts_first(self):
        rng = np.random.default_rng(5)
        outcomes = [
            DetectionOutcome(int(rng.integers(0, 5)), int(rng.integers(0, 3)), int(rng.integers(0, 3)))
            for _ in range(50)
        ]
        total = sum_outcomes(outcomes)
        assert total.tp == sum(o.tp for o in outcomes)
        p, r, f1 = metrics(total)
        tp, fp, fn = total.tp, total.fp, total.fn
        assert p == pytest.approx(tp / (tp + fp))
        assert r == pytest.approx(tp / (tp + fn))
        assert f1 == pytest.approx(tp / (tp + 0.5 * (fp + fn)))


# -- the two-peak trap ---------------------------------------------------------


class TestTwoPeakTrap:
    def test_neighbourhoods_identical(self):
        x, p_false, p_true = two_peak_trap()
        for r in range(0, 7):
            np.testing.assert_array_equal(
                x[p_false - r:p_false + r + 1], x[p_true - r:p_true + r + 1]
            )

    def test_single_template_always_ties(self):
        x, p_false, p_true = two_peak_trap()
        rng = np.random.default_rng(6)
        for _ in range(1500):
            a = rng.standard_normal(9)
            y = normalize_maxabs(correlate(x, a))
            assert y[p_false] == y[p_true]  # identical windows: exact tie
            assert int(np.argmax(y)) != p_true

    def test_two_stage_sequence_localises_true_peak(self):
        x, _, p_true = two_peak_trap()
        a1, a2 = two_stage_templates()
        x2 = normalize_maxabs(correlate(x, a1))
        x3 = normalize_maxabs(correlate(x2, a2))
        assert int(np.argmax(x3)) == p_true
