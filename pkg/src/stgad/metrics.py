"""Detection and diagnosis metrics.

All detection metrics operate on raw anomaly scores (higher = more
anomalous) against 0/1 labels. Threshold sweeps enumerate every distinct
score as a candidate threshold with the predicate score >= threshold,
plus a sentinel above the maximum so the empty prediction set is always
considered. F1 ties report the lowest achieving threshold, and 0/0
ratios (no predictions, or no positives) count as zero.

The delay-constrained variant applies the point-adjust protocol with a
detection deadline: a labelled segment whose scores cross the threshold
at or before segment start + delay counts entirely as detected; a later
or missing detection zeroes the whole segment (no partial credit, and
late hits inside it do not count as false positives either). delay=None
means no deadline.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ContractError, DimensionError


def _check_scores_labels(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise DimensionError(
            f"scores {scores.shape} and labels {labels.shape} must be equal 1-D arrays"
        )
    if not np.all((labels == 0) | (labels == 1)):
        raise ContractError("labels must be 0 or 1")
    if not np.all(np.isfinite(scores)):
        raise ContractError("scores must be finite")
    return scores, labels.astype(bool)


def roc_auc(scores, labels) -> float:
    """Rank-based AUC (ties share average rank)."""
    scores, labels = _check_scores_labels(scores, labels)
    pos = int(labels.sum())
    neg = len(labels) - pos
    if pos == 0 or neg == 0:
        raise ContractError("ROC AUC needs both classes present")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores), dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    base = np.arange(1, len(scores) + 1, dtype=np.float64)
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = base[i : j + 1].mean()
        i = j + 1
    return float((ranks[labels].sum() - pos * (pos + 1) / 2.0) / (pos * neg))


def prc_auc(scores, labels) -> float:
    """Average precision (step-function integral of the PR curve)."""
    scores, labels = _check_scores_labels(scores, labels)
    pos = int(labels.sum())
    if pos == 0:
        raise ContractError("PRC AUC needs at least one positive")
    order = np.argsort(-scores, kind="mergesort")
    sorted_labels = labels[order].astype(np.float64)
    sorted_scores = scores[order]
    tp = np.cumsum(sorted_labels)
    predicted = np.arange(1, len(scores) + 1, dtype=np.float64)
    # only evaluate at the last index of each tied block
    block_end = np.flatnonzero(np.diff(sorted_scores) != 0)
    block_end = np.append(block_end, len(scores) - 1)
    precision = tp[block_end] / predicted[block_end]
    recall = tp[block_end] / pos
    prev_recall = np.concatenate([[0.0], recall[:-1]])
    return float(np.sum((recall - prev_recall) * precision))


@dataclass
class F1Result:
    f1: float
    precision: float
    recall: float
    threshold: float


def _f1_from_counts(tp, fp, fn):
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = (
        2.0 * precision * recall / (precision + recall)
        if precision + recall > 0
        else 0.0
    )
    return f1, precision, recall


def _candidate_thresholds(scores: np.ndarray) -> np.ndarray:
    distinct = np.unique(scores)
    return np.append(distinct, distinct[-1] + 1.0)  # sentinel: predict nothing


def best_f1(scores, labels) -> F1Result:
    """Max pointwise F1 over all distinct-score thresholds."""
    scores, labels = _check_scores_labels(scores, labels)
    pos = int(labels.sum())
    if pos == 0:
        raise ContractError("best F1 needs at least one positive")
    thresholds = _candidate_thresholds(scores)
    pos_sorted = np.sort(scores[labels])
    neg_sorted = np.sort(scores[~labels])
    # counts of scores >= threshold
    tp = len(pos_sorted) - np.searchsorted(pos_sorted, thresholds, side="left")
    fp = len(neg_sorted) - np.searchsorted(neg_sorted, thresholds, side="left")
    fn = pos - tp
    precision = np.divide(tp, tp + fp, out=np.zeros_like(thresholds), where=(tp + fp) > 0)
    recall = tp / pos
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros_like(thresholds), where=denom > 0)
    best = int(np.argmax(f1))  # argmax returns the first (lowest threshold) on ties
    return F1Result(
        f1=float(f1[best]),
        precision=float(precision[best]),
        recall=float(recall[best]),
        threshold=float(thresholds[best]),
    )


def f1_at_threshold(scores, labels, threshold: float, strict: bool = True) -> F1Result:
    """Pointwise F1 for one fixed threshold (strict exceedance by default)."""
    scores, labels = _check_scores_labels(scores, labels)
    pred = scores > threshold if strict else scores >= threshold
    tp = int(np.sum(pred & labels))
    fp = int(np.sum(pred & ~labels))
    fn = int(np.sum(~pred & labels))
    f1, precision, recall = _f1_from_counts(tp, fp, fn)
    return F1Result(f1=f1, precision=precision, recall=recall, threshold=float(threshold))


def segments_from_labels(labels) -> list:
    """Maximal runs of 1s as (start, end) inclusive pairs."""
    labels = np.asarray(labels).astype(bool)
    if labels.ndim != 1:
        raise DimensionError("labels must be 1-D")
    padded = np.concatenate([[False], labels, [False]])
    diff = np.diff(padded.astype(np.int8))
    starts = np.flatnonzero(diff == 1)
    ends = np.flatnonzero(diff == -1) - 1
    return list(zip(starts.tolist(), ends.tolist()))


def point_adjust_f1(scores, labels, delay: Optional[int] = None) -> F1Result:
    """Best delay-constrained point-adjust F1 over the threshold sweep.

    ``delay`` is a step count; None disables the deadline. A segment is
    credited in full when its scores cross the threshold no later than
    ``delay`` steps after the segment starts, and zeroed entirely
    otherwise.
    """
    scores, labels = _check_scores_labels(scores, labels)
    if delay is not None and delay < 0:
        raise ContractError(f"delay must be >= 0, got {delay}")
    segments = segments_from_labels(labels)
    if not segments:
        raise ContractError("point-adjust F1 needs at least one positive segment")
    seg_lengths = np.array([e - s + 1 for s, e in segments], dtype=np.float64)
    seg_peak = np.empty(len(segments))
    for i, (s, e) in enumerate(segments):
        deadline = e if delay is None else min(e, s + delay)
        seg_peak[i] = scores[s : deadline + 1].max()
    outside = np.sort(scores[~labels])
    thresholds = _candidate_thresholds(scores)
    # detected segments contribute their full length as true positives
    order = np.argsort(seg_peak)
    peak_sorted = seg_peak[order]
    len_sorted = seg_lengths[order]
    suffix_len = np.concatenate([np.cumsum(len_sorted[::-1])[::-1], [0.0]])
    first_detected = np.searchsorted(peak_sorted, thresholds, side="left")
    tp = suffix_len[first_detected]
    fn = seg_lengths.sum() - tp
    fp = (len(outside) - np.searchsorted(outside, thresholds, side="left")).astype(np.float64)
    precision = np.divide(tp, tp + fp, out=np.zeros_like(tp), where=(tp + fp) > 0)
    recall = tp / seg_lengths.sum()
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros_like(tp), where=denom > 0)
    best = int(np.argmax(f1))
    return F1Result(
        f1=float(f1[best]),
        precision=float(precision[best]),
        recall=float(recall[best]),
        threshold=float(thresholds[best]),
    )


def delay_steps(minutes: float, sample_interval_seconds: float) -> int:
    """Convert a detection deadline in minutes to a step count."""
    if sample_interval_seconds <= 0:
        raise ContractError("sample interval must be positive")
    return int(round(minutes * 60.0 / sample_interval_seconds))


def rc_top_k(
    rankings: Sequence[Sequence[str]],
    true_causes: Sequence[Sequence[str]],
    k: int = 3,
) -> float:
    """Fraction of segments whose true cause appears in the ranking's top k.

    Segments with an empty cause set are skipped with a warning; a hit is
    any overlap between the top-k channels and the cause set.
    """
    if len(rankings) != len(true_causes):
        raise DimensionError("rankings and cause sets differ in length")
    hits, used = 0, 0
    for ranked, causes in zip(rankings, true_causes):
        causes = set(causes)
        if not causes:
            warnings.warn("segment with empty cause set skipped in RC evaluation")
            continue
        used += 1
        if causes & set(list(ranked)[: max(0, k)]):
            hits += 1
    if used == 0:
        raise ContractError("no segments with known causes to evaluate")
    return hits / used


# ---------------------------------------------------------------------------
# report assembly


def evaluation_report(
    scores,
    labels,
    delays_minutes: Sequence[float],
    sample_interval_seconds: float,
    auto_threshold: Optional[float] = None,
) -> str:
    """Plain-text metric table: overall block, then best F1 per deadline."""
    scores, labels = _check_scores_labels(scores, labels)
    lines = []
    lines.append(f"{'metric':<24} value")
    lines.append(f"{'roc_auc':<24} {roc_auc(scores, labels):.6f}")
    lines.append(f"{'prc_auc':<24} {prc_auc(scores, labels):.6f}")
    bf = best_f1(scores, labels)
    lines.append(f"{'best_f1':<24} {bf.f1:.6f}")
    lines.append(f"{'best_f1_precision':<24} {bf.precision:.6f}")
    lines.append(f"{'best_f1_recall':<24} {bf.recall:.6f}")
    lines.append(f"{'best_f1_threshold':<24} {bf.threshold:.6f}")
    if auto_threshold is not None:
        at = f1_at_threshold(scores, labels, auto_threshold)
        lines.append(f"{'auto_threshold':<24} {auto_threshold:.6f}")
        lines.append(f"{'auto_threshold_f1':<24} {at.f1:.6f}")
    lines.append("")
    lines.append(f"{'delay_minutes':<16} {'f1':<10} {'precision':<11} recall")
    for minutes in delays_minutes:
        steps = delay_steps(minutes, sample_interval_seconds)
        r = point_adjust_f1(scores, labels, steps)
        lines.append(
            f"{minutes:<16g} {r.f1:<10.6f} {r.precision:<11.6f} {r.recall:.6f}"
        )
    r = point_adjust_f1(scores, labels, None)
    lines.append(
        f"{'unbounded':<16} {r.f1:<10.6f} {r.precision:<11.6f} {r.recall:.6f}"
    )
    return "\n".join(lines) + "\n"
