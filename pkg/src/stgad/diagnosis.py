"""Root-cause ranking from per-channel score contributions.

Two rankers: ``direct`` orders channels by their own contribution at the
diagnosis point; ``mtcl_graph`` scores each channel by its own
contribution plus the edge-weighted contributions of its in- and
out-neighbors in the sparsified learned adjacency, which lets a quiet
root whose dependents went loud collect the blame while weak spurious
edges pool almost nothing. Ties and the all-zero case fall back to
channel index order, which makes the all-zero ranking the uniform one.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .data import AnomalySegment
from .errors import ContractError, DimensionError
from .scoring import ScoreStream

RANKING_MODES = ("direct", "mtcl_graph")


@dataclass
class CauseRanking:
    """Channels ordered most-suspect first, with normalized shares."""

    mode: str
    channels: tuple  # names, best first
    shares: np.ndarray  # same order, sums to 1
    peak_index: Optional[int] = None  # test row the ranking was taken at
    segment: Optional[AnomalySegment] = None

    def top(self, k: int) -> tuple:
        return self.channels[: max(0, k)]


def _order_desc(weights: np.ndarray) -> np.ndarray:
    # stable sort on negated weights: equal weights keep index order
    return np.argsort(-weights, kind="stable")


def _shares(weights: np.ndarray) -> np.ndarray:
    total = float(weights.sum())
    if total <= 0:
        return np.full(len(weights), 1.0 / len(weights))
    return weights / total


def rank_direct(contributions: np.ndarray, channel_names: Sequence[str]) -> CauseRanking:
    contributions = np.asarray(contributions, dtype=np.float64)
    if contributions.ndim != 1 or len(contributions) != len(channel_names):
        raise DimensionError("contribution vector does not match channel names")
    order = _order_desc(contributions)
    shares = _shares(contributions)
    return CauseRanking(
        mode="direct",
        channels=tuple(channel_names[i] for i in order),
        shares=shares[order],
    )


def rank_neighborhood(
    contributions: np.ndarray,
    adjacency: np.ndarray,
    channel_names: Sequence[str],
) -> CauseRanking:
    contributions = np.asarray(contributions, dtype=np.float64)
    if contributions.ndim != 1 or len(contributions) != len(channel_names):
        raise DimensionError("contribution vector does not match channel names")
    adjacency = np.asarray(adjacency, dtype=np.float64)
    if adjacency.shape != (len(channel_names), len(channel_names)):
        raise DimensionError("adjacency size does not match channel names")
    # own blame at weight 1, neighbors at their edge weight in either direction
    pooled = contributions + adjacency @ contributions + adjacency.T @ contributions
    order = _order_desc(pooled)
    shares = _shares(pooled)
    return CauseRanking(
        mode="mtcl_graph",
        channels=tuple(channel_names[i] for i in order),
        shares=shares[order],
    )


def rank_at(
    contributions: np.ndarray,
    channel_names: Sequence[str],
    mode: str = "mtcl_graph",
    adjacency: Optional[np.ndarray] = None,
) -> CauseRanking:
    if mode == "direct":
        return rank_direct(contributions, channel_names)
    if mode == "mtcl_graph":
        if adjacency is None:
            raise ContractError("mtcl_graph ranking needs the learned adjacency")
        return rank_neighborhood(contributions, adjacency, channel_names)
    raise ContractError(f"unknown ranking mode {mode!r}")


def diagnose_segments(
    stream: ScoreStream,
    segments: Sequence[AnomalySegment],
    channel_names: Sequence[str],
    mode: str = "mtcl_graph",
    adjacency: Optional[np.ndarray] = None,
) -> list:
    """One ranking per segment, taken at the segment's peak-score index.

    Segments with no scored index (e.g. entirely inside the warm-up
    window) are skipped with a warning.
    """
    out = []
    for seg in segments:
        inside = np.flatnonzero((stream.indices >= seg.start) & (stream.indices <= seg.end))
        if inside.size == 0:
            warnings.warn(
                f"segment {seg.start}..{seg.end} has no scored points; skipped"
            )
            continue
        peak = inside[np.argmax(stream.scores[inside])]
        ranking = rank_at(stream.contributions[peak], channel_names, mode, adjacency)
        ranking.peak_index = int(stream.indices[peak])
        ranking.segment = seg
        out.append(ranking)
    return out


def format_diagnosis(rankings: Sequence[CauseRanking], top: int = 3) -> str:
    """Plain-text report: one line per segment, best suspects first."""
    lines = ["segment      peak   mode        top channels (share)"]
    for r in rankings:
        seg = r.segment
        span = f"{seg.start}-{seg.end}" if seg is not None else "?"
        label = seg.mode if seg is not None and seg.mode else "-"
        tops = ", ".join(
            f"{ch} ({share:.0%})" for ch, share in zip(r.channels[:top], r.shares[:top])
        )
        lines.append(f"{span:<12} {r.peak_index!s:<6} {r.mode:<11} {tops}  [{label}]")
    return "\n".join(lines) + "\n"
