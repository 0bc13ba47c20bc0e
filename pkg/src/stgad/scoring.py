"""Forecast-error normalization and anomaly scoring.

Raw absolute forecast errors are robustly normalized per channel against
a causal sliding window: the current error is pushed into the window
first, then standardized by that window's median and interquartile range
(linear-interpolation quantiles). With a single element in the window
the output is exactly zero, so cold starts are quiet by construction.

Scoring projects each normalized error vector onto the principal
components of the validation errors, reconstructs it from the leading
components, and takes the L1 distance between reconstruction and input
as the anomaly score; per-channel absolute reconstruction gaps are the
contribution vector used for root-cause ranking. The alternative scorer
(for the ablation and the raw-signal baseline) sums per-channel Gaussian
negative log densities instead. The anomaly threshold is auto-calibrated
to the maximum validation score; only strictly larger scores flag.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .engine import kernels
from .errors import ContractError, DimensionError

IQR_EPSILON = 1e-2
SMAPE_EPSILON = 1e-8


class ErrorNormalizer:
    """Streaming per-channel (e - median) / (IQR + eps) over a causal window."""

    def __init__(self, n_channels: int, window: int, epsilon: float = IQR_EPSILON):
        if window < 1:
            raise ContractError(f"normalizer window must be >= 1, got {window}")
        self.n_channels = n_channels
        self.window = window
        self.epsilon = float(epsilon)
        self.count = 0
        self._next = 0  # ring slot of the oldest element once full
        self._ring = np.zeros((n_channels, window))  # arrival order
        self._sorted = np.zeros((n_channels, window))  # ascending per row

    def _insert(self, values: np.ndarray) -> None:
        n = self.count
        if n == self.window:  # evict the oldest value of each channel first
            old = self._ring[:, self._next]
            for c in range(self.n_channels):
                row = self._sorted[c]
                pos = int(np.searchsorted(row[:n], old[c]))
                row[pos : n - 1] = row[pos + 1 : n]
            n -= 1
        for c in range(self.n_channels):
            row = self._sorted[c]
            pos = int(np.searchsorted(row[:n], values[c]))
            row[pos + 1 : n + 1] = row[pos:n]
            row[pos] = values[c]
        self._ring[:, self._next] = values
        self._next = (self._next + 1) % self.window
        self.count = min(self.count + 1, self.window)

    def _quantiles(self):
        """(q25, median, q75) per channel, linear interpolation, vectorized."""
        n = self.count
        out = []
        for p in (0.25, 0.5, 0.75):
            h = (n - 1) * p
            lo = int(np.floor(h))
            frac = h - lo
            hi = min(lo + 1, n - 1)
            out.append(self._sorted[:, lo] * (1.0 - frac) + self._sorted[:, hi] * frac)
        return out

    def push(self, errors: np.ndarray) -> np.ndarray:
        """Ingest one error vector and return its normalized form."""
        errors = np.asarray(errors, dtype=np.float64)
        if errors.shape != (self.n_channels,):
            raise DimensionError(
                f"normalizer expects {self.n_channels} channels, got {errors.shape}"
            )
        self._insert(errors)
        q25, med, q75 = self._quantiles()
        return (errors - med) / ((q75 - q25) + self.epsilon)

    def _block_args(self, rows: np.ndarray) -> np.ndarray:
        rows = np.ascontiguousarray(rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[1] != self.n_channels:
            raise DimensionError(
                f"normalizer expects [T, {self.n_channels}] blocks, got {rows.shape}"
            )
        return rows

    def push_block(self, errors: np.ndarray) -> np.ndarray:
        """Push rows in order; returns the normalized block."""
        errors = self._block_args(errors)
        res = kernels.normalizer_block(
            self._ring, self._sorted, self._next, self.count,
            errors, self.epsilon, True,
        )
        if res is not None:
            out, self._next, self.count = res
            return out
        out = np.empty_like(errors, dtype=np.float64)
        for i, row in enumerate(errors):
            out[i] = self.push(row)
        return out

    def preload(self, history: np.ndarray) -> None:
        """Replay raw error rows (chronological) without emitting output."""
        history = self._block_args(history)
        res = kernels.normalizer_block(
            self._ring, self._sorted, self._next, self.count,
            history, self.epsilon, False,
        )
        if res is not None:
            _, self._next, self.count = res
            return
        for row in history:
            self._insert(row)

    def history(self) -> np.ndarray:
        """Buffer contents in chronological order, [count, N]."""
        if self.count < self.window:
            block = self._ring[:, : self.count]
        else:
            block = np.concatenate(
                [self._ring[:, self._next :], self._ring[:, : self._next]], axis=1
            )
        return block.T.copy()


class PcaScorer:
    """Reconstruction-gap scoring on the leading validation components."""

    VARIANCE_FALLBACK_SHARE = 0.90

    def __init__(self, smape_target: float = 0.10):
        self.smape_target = float(smape_target)
        self.components: Optional[np.ndarray] = None  # [N, N], rows = eigenvectors
        self.mean: Optional[np.ndarray] = None
        self.n_components: int = 0
        self.fit_smape: float = float("nan")
        self.eigenvalues: Optional[np.ndarray] = None
        self.selection_rule: str = ""

    def fit(self, normalized_errors: np.ndarray) -> "PcaScorer":
        """Eigendecompose the validation error covariance and pick the
        smallest component count whose reconstruction sMAPE beats the target.

        Scoring measures the part of an error row the retained subspace
        cannot explain, so the full basis is useless: it reconstructs every
        row exactly and the score collapses to zero everywhere.  When no
        strict subspace meets the sMAPE target the reconstruction rule has
        nothing to say, and we fall back to the smallest count covering
        VARIANCE_FALLBACK_SHARE of validation variance, capped below the
        channel count."""
        e = np.asarray(normalized_errors, dtype=np.float64)
        if e.ndim != 2 or len(e) < 2:
            raise ContractError("PCA fit needs at least two error rows")
        self.mean = e.mean(axis=0)
        centered = e - self.mean
        cov = centered.T @ centered / (len(e) - 1)
        eigvals, eigvecs = np.linalg.eigh(cov)
        eigvals = np.clip(eigvals[::-1], 0.0, None)  # descending, non-negative
        self.components = eigvecs[:, ::-1].T  # row k = k-th eigenvector
        n = e.shape[1]
        chosen = 0
        for load in range(1, n):
            smape = self._smape(e, load)
            if smape < self.smape_target:
                chosen = load
                break
        if chosen > 0:
            self.selection_rule = "reconstruction"
        else:
            total = float(eigvals.sum())
            if total > 0.0:
                shares = np.cumsum(eigvals) / total
                chosen = int(np.searchsorted(shares, self.VARIANCE_FALLBACK_SHARE) + 1)
            else:
                chosen = 1
            chosen = max(1, min(chosen, n - 1)) if n > 1 else 1
            self.selection_rule = "variance"
        self.n_components = chosen
        self.fit_smape = self._smape(e, chosen)
        self.eigenvalues = eigvals
        return self

    def _require_fit(self):
        if self.components is None:
            raise ContractError("scorer used before fit")

    def reconstruct(self, errors: np.ndarray, n_components: Optional[int] = None) -> np.ndarray:
        self._require_fit()
        load = self.n_components if n_components is None else n_components
        basis = self.components[:load]
        single = errors.ndim == 1
        e = np.atleast_2d(errors)
        proj = (e - self.mean) @ basis.T
        recon = proj @ basis + self.mean
        return recon[0] if single else recon

    def _smape(self, errors: np.ndarray, n_components: int) -> float:
        recon = self.reconstruct(errors, n_components)
        num = 2.0 * np.abs(recon - errors)
        den = np.abs(recon) + np.abs(errors) + SMAPE_EPSILON
        return float(np.mean(num / den))

    def contributions(self, errors: np.ndarray) -> np.ndarray:
        """Per-channel |reconstruction - input| gaps."""
        return np.abs(self.reconstruct(errors) - errors)

    def score(self, errors: np.ndarray) -> np.ndarray:
        """L1 norm of the reconstruction gap; scalar per row."""
        gaps = self.contributions(errors)
        return gaps.sum(axis=-1)


class GaussianScorer:
    """Sum of per-channel negative log Gaussian densities."""

    VAR_FLOOR = 1e-6

    def __init__(self):
        self.mean: Optional[np.ndarray] = None
        self.var: Optional[np.ndarray] = None

    def fit(self, normalized_errors: np.ndarray) -> "GaussianScorer":
        e = np.asarray(normalized_errors, dtype=np.float64)
        if e.ndim != 2 or len(e) < 2:
            raise ContractError("Gaussian fit needs at least two error rows")
        self.mean = e.mean(axis=0)
        self.var = np.maximum(e.var(axis=0), self.VAR_FLOOR)
        return self

    def contributions(self, errors: np.ndarray) -> np.ndarray:
        if self.mean is None:
            raise ContractError("scorer used before fit")
        z2 = (errors - self.mean) ** 2 / self.var
        return 0.5 * (np.log(2.0 * np.pi * self.var) + z2)

    def score(self, errors: np.ndarray) -> np.ndarray:
        return self.contributions(errors).sum(axis=-1)


@dataclass
class ScoreStream:
    """Scores for test rows window..T-1, aligned by absolute row index."""

    indices: np.ndarray  # [M] row index into the test split
    scores: np.ndarray  # [M]
    flags: np.ndarray  # [M] 0/1 from the auto threshold
    contributions: np.ndarray  # [M, N]


class ScoringPipeline:
    """Validation-calibrated scoring shared by the live path and baselines.

    fit() streams the validation errors through the normalizer, fits the
    scorer on the normalized block, and pins the threshold at the maximum
    validation score. stream() continues the same normalizer state over
    test errors, so scores depend only on data at or before their index.
    """

    def __init__(self, n_channels: int, window: int, method: str = "pca",
                 epsilon: float = IQR_EPSILON, smape_target: float = 0.10):
        if method not in ("pca", "gaussian"):
            raise ContractError(f"unknown scoring method {method!r}")
        self.method = method
        self.normalizer = ErrorNormalizer(n_channels, window, epsilon)
        self.scorer = PcaScorer(smape_target) if method == "pca" else GaussianScorer()
        self.threshold: Optional[float] = None
        self.validation_scores: Optional[np.ndarray] = None

    def fit(self, validation_errors: np.ndarray) -> "ScoringPipeline":
        normalized = self.normalizer.push_block(validation_errors)
        self.scorer.fit(normalized)
        self.validation_scores = self.scorer.score(normalized)
        self.threshold = float(self.validation_scores.max())
        return self

    def stream(self, test_errors: np.ndarray, first_index: int = 0) -> ScoreStream:
        if self.threshold is None:
            raise ContractError("stream called before fit")
        m = len(test_errors)
        scores = np.empty(m)
        contribs = np.empty((m, test_errors.shape[1]))
        for i, row in enumerate(test_errors):
            normed = self.normalizer.push(row)
            contribs[i] = self.scorer.contributions(normed)
            scores[i] = contribs[i].sum()
        flags = (scores > self.threshold).astype(np.int8)
        indices = np.arange(first_index, first_index + m)
        return ScoreStream(indices=indices, scores=scores, flags=flags, contributions=contribs)
