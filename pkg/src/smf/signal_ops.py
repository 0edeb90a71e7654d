"""Deterministic signal mathematics for sequential matched filtering.

Signals are 1-D float64 arrays (length L, nominally 250 samples at 200 Hz);
templates are short 1-D float64 arrays (length H). All functions are pure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError


def correlate(x: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Slide template `a` over signal `x` and measure their correlation.

    y(n) = sum_{k=0}^{H-1} a(k) * x(n + k - floor(H/2)), with x read as zero
    outside [0, L). Output has the same length as `x`.
    """
    x = np.asarray(x, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    h = a.shape[0]
    center = h // 2
    padded = np.concatenate([np.zeros(center), x, np.zeros(h - 1 - center)])
    return np.correlate(padded, a, mode="valid")


def normalize_maxabs(x: np.ndarray) -> np.ndarray:
    """Scale so max|x| == 1; an all-zero signal is returned unchanged."""
    x = np.asarray(x, dtype=np.float64)
    peak = np.max(np.abs(x))
    if peak == 0.0:
        return x.copy()
    return x / peak


def find_peaks(x: np.ndarray, height: float = 0.5, distance: int = 30) -> list[int]:
    """Local maxima of `x` at least `height` tall and `distance` apart.

    Semantics follow scipy.signal.find_peaks: a candidate is an interior
    sample strictly greater than both neighbours; a flat plateau with strictly
    lower samples on both sides yields one candidate at its midpoint (rounded
    down on even plateaus). Candidates below `height` are dropped, then the
    survivors are visited in order of decreasing value (ties: lower index
    first) and any unclaimed candidate closer than `distance` samples to an
    already kept peak is removed, so peaks exactly `distance` apart coexist.
    Returns indices in ascending order.
    """
    if distance < 1:
        raise DataError("find_peaks: distance must be >= 1")
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    candidates: list[int] = []
    i = 1
    while i < n - 1:
        if x[i - 1] < x[i]:
            j = i
            while j + 1 < n and x[j + 1] == x[i]:
                j += 1
            if j + 1 < n and x[j + 1] < x[i]:
                candidates.append((i + j) // 2)
            i = j + 1
        else:
            i += 1
    candidates = [c for c in candidates if x[c] >= height]
    order = sorted(range(len(candidates)), key=lambda idx: (-x[candidates[idx]], candidates[idx]))
    removed = [False] * len(candidates)
    kept: list[int] = []
    for idx in order:
        if removed[idx]:
            continue
        kept.append(candidates[idx])
        for other in range(len(candidates)):
            if not removed[other] and other != idx:
                if abs(candidates[other] - candidates[idx]) < distance:
                    removed[other] = True
    return sorted(kept)


@dataclass
class DetectionOutcome:
    """TP/FP/FN counts plus the matched (predicted, truth) index pairs."""

    tp: int
    fp: int
    fn: int
    matches: list[tuple[int, int]] = field(default_factory=list)


def match_peaks(pred: list[int], truth: list[int], tol: int = 5) -> DetectionOutcome:
    """One-to-one matching of predicted to ground-truth peaks within `tol`.

    Candidate pairs with |p - t| <= tol are claimed in order of increasing
    distance; equal distances favour the earlier truth index, then the
    earlier predicted index. Inputs must be sorted ascending.
    """
    pred = list(pred)
    truth = list(truth)
    if any(pred[i] >= pred[i + 1] for i in range(len(pred) - 1)):
        raise DataError("match_peaks: predicted indices must be sorted strictly ascending")
    if any(truth[i] >= truth[i + 1] for i in range(len(truth) - 1)):
        raise DataError("match_peaks: truth indices must be sorted strictly ascending")
    pairs = [
        (abs(p - t), ti, pi)
        for ti, t in enumerate(truth)
        for pi, p in enumerate(pred)
        if abs(p - t) <= tol
    ]
    pairs.sort()
    pred_used = [False] * len(pred)
    truth_used = [False] * len(truth)
    matches: list[tuple[int, int]] = []
    for _, ti, pi in pairs:
        if not pred_used[pi] and not truth_used[ti]:
            pred_used[pi] = True
            truth_used[ti] = True
            matches.append((pred[pi], truth[ti]))
    matches.sort()
    tp = len(matches)
    return DetectionOutcome(tp=tp, fp=len(pred) - tp, fn=len(truth) - tp, matches=matches)


def reward_linear(outcome: DetectionOutcome) -> float:
    """10*TP - 5*FP - 5*FN."""
    return 10.0 * outcome.tp - 5.0 * outcome.fp - 5.0 * outcome.fn


def reward_f1(outcome: DetectionOutcome) -> float:
    """TP / (TP + 0.5*(FP + FN)); 0 when the denominator is 0."""
    denom = outcome.tp + 0.5 * (outcome.fp + outcome.fn)
    if denom == 0.0:
        return 0.0
    return outcome.tp / denom


def metrics(outcome: DetectionOutcome) -> tuple[float, float, float]:
    """(precision, recall, F-1); each ratio is 0 when its denominator is 0."""
    tp, fp, fn = outcome.tp, outcome.fp, outcome.fn
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1_denom = tp + 0.5 * (fp + fn)
    f1 = tp / f1_denom if f1_denom > 0 else 0.0
    return precision, recall, f1


def sum_outcomes(outcomes: list[DetectionOutcome]) -> DetectionOutcome:
    """Micro-average helper: add up counts across segments."""
    return DetectionOutcome(
        tp=sum(o.tp for o in outcomes),
        fp=sum(o.fp for o in outcomes),
        fn=sum(o.fn for o in outcomes),
        matches=[],
    )
