"""Reference detectors that skip the forecasting stage.

Both score raw scaled signal values row by row, so they are causal by
construction and give the forecaster something honest to beat:

* raw-signal Gaussian: per-channel Gaussians fitted on the validation
  rows; the score is the summed negative log density.
* signal PCA: principal components fitted on train plus validation rows
  with the same sMAPE component rule as the error scorer; the score is
  the L1 reconstruction gap. This is also the detector the full model
  degrades to when the whole forecasting stack is ablated away.

Thresholds follow the same auto rule as the main pipeline: the maximum
validation score, strict exceedance.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ContractError
from .scoring import GaussianScorer, PcaScorer


@dataclass
class BaselineScores:
    name: str
    indices: np.ndarray  # test row indices (0..T-1; these methods have no warm-up)
    scores: np.ndarray
    flags: np.ndarray
    threshold: float
    contributions: np.ndarray  # [T, N]
    validation_scores: np.ndarray


def _package(name, scorer, validation_values, test_values) -> BaselineScores:
    val_scores = scorer.score(validation_values)
    threshold = float(val_scores.max())
    contributions = scorer.contributions(test_values)
    scores = contributions.sum(axis=-1)
    return BaselineScores(
        name=name,
        indices=np.arange(len(test_values)),
        scores=scores,
        flags=(scores > threshold).astype(np.int8),
        threshold=threshold,
        contributions=contributions,
        validation_scores=val_scores,
    )


def raw_signal_baseline(
    validation_values: np.ndarray, test_values: np.ndarray
) -> BaselineScores:
    """Per-channel Gaussian density of the scaled signal itself."""
    if len(validation_values) < 2:
        raise ContractError("raw-signal baseline needs at least two validation rows")
    scorer = GaussianScorer().fit(validation_values)
    return _package("raw_signal", scorer, validation_values, test_values)


def signal_pca_baseline(
    train_values: np.ndarray,
    validation_values: np.ndarray,
    test_values: np.ndarray,
    smape_target: float = 0.10,
) -> BaselineScores:
    """PCA reconstruction gap of the scaled signal (no forecaster at all)."""
    fit_block = np.concatenate([train_values, validation_values], axis=0)
    if len(fit_block) < 2:
        raise ContractError("PCA baseline needs at least two fit rows")
    scorer = PcaScorer(smape_target).fit(fit_block)
    return _package("signal_pca", scorer, validation_values, test_values)
