"""End-to-end orchestration: prepare data, train, calibrate scoring,
persist one self-contained checkpoint, and stream test scores.

The causal contract the pieces compose into: the scaler and model see
only training data; the scoring calibration (error normalizer state, PCA
basis, threshold) sees only validation data; test scoring continues the
same normalizer state row by row. The score at test row t therefore
depends only on rows up to t, which the tests verify by poisoning the
future and re-scoring.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .config import RunConfig
from .data import MinMaxScaler, TimeSeriesDataset, median_downsample, split_validation
from .errors import CheckpointError, ConfigError
from .model import (
    ForecastModel,
    ModelConfig,
    load_checkpoint,
    save_checkpoint,
    train_model,
)
from .scoring import PcaScorer, ScoreStream, ScoringPipeline

NORMALIZER_CAP = 5000


@dataclass
class PreparedData:
    dataset: TimeSeriesDataset  # post trim/downsample
    scaler: MinMaxScaler
    train_scaled: np.ndarray  # training head, validation excluded
    validation_scaled: np.ndarray
    test_scaled: np.ndarray


def prepare_data(dataset: TimeSeriesDataset, cfg: RunConfig) -> PreparedData:
    """Trim, downsample, scale on train statistics, split validation."""
    train = dataset.train
    if cfg.data.trim_head:
        if cfg.data.trim_head >= len(train):
            raise ConfigError(
                f"trim_head={cfg.data.trim_head} leaves no training rows"
            )
        train = train[cfg.data.trim_head :]
    test, labels = dataset.test, dataset.test_labels
    interval = dataset.sample_interval_seconds
    stride = cfg.data.downsample_stride
    if stride > 1:
        train, _ = median_downsample(train, stride)
        test, labels = median_downsample(test, stride, labels)
        interval *= stride
    working = TimeSeriesDataset(
        channel_names=dataset.channel_names,
        train=train,
        test=test,
        test_labels=labels,
        sample_interval_seconds=interval,
        segments=dataset.segments if stride == 1 else None,
    )
    scaler = MinMaxScaler().fit(train)
    train_scaled = scaler.transform(train)
    head, validation = split_validation(train_scaled, cfg.data.validation_ratio)
    return PreparedData(
        dataset=working,
        scaler=scaler,
        train_scaled=head,
        validation_scaled=validation,
        test_scaled=scaler.transform(test),
    )


def normalizer_window(validation_rows: int, override: int = 0) -> int:
    if override > 0:
        return override
    return max(1, min(validation_rows, NORMALIZER_CAP))


@dataclass
class Artifacts:
    model: ForecastModel
    scaler: MinMaxScaler
    scoring: ScoringPipeline
    channel_names: tuple
    sample_interval_seconds: float
    history: list


def model_config_from_run(cfg: RunConfig, n_channels: int) -> ModelConfig:
    m = cfg.model
    return ModelConfig(
        n_channels=n_channels,
        window=m.window,
        layers=m.layers,
        conv_channels=m.conv_channels,
        skip_channels=m.skip_channels,
        embed_dim=m.embed_dim,
        alpha=m.alpha,
        topk=m.topk,
        retain=m.retain,
        hops=m.hops,
        dilation_base=m.dilation_base,
        head_hidden=m.head_hidden,
        share_gcn_directions=m.share_gcn_directions,
        ablation=m.ablation,
        dtype=m.dtype,
        seed=m.seed,
    )


def forecast_errors(model: ForecastModel, values: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Absolute one-step forecast errors for rows window..T-1."""
    preds = model.forecast_series(values, batch_size)
    return np.abs(values[model.config.window :] - preds.astype(np.float64))


def train_pipeline(
    cfg: RunConfig,
    dataset: TimeSeriesDataset,
    log: Optional[Callable] = None,
) -> Artifacts:
    """Full fit: forecaster on the training head, scoring on validation."""
    prep = prepare_data(dataset, cfg)
    w = cfg.model.window
    if len(prep.validation_scaled) <= w + 1:
        raise ConfigError(
            f"validation split has {len(prep.validation_scaled)} rows; "
            f"needs more than window+1={w + 1}"
        )
    model = ForecastModel(model_config_from_run(cfg, prep.dataset.n_channels))
    history = train_model(
        model,
        prep.train_scaled,
        prep.validation_scaled,
        epochs=cfg.training.epochs,
        batch_size=cfg.training.batch_size,
        lr=cfg.training.learning_rate,
        betas=(cfg.training.beta1, cfg.training.beta2),
        grad_clip=cfg.training.grad_clip or None,
        log=log,
    )
    errors = forecast_errors(model, prep.validation_scaled)
    scoring = ScoringPipeline(
        n_channels=prep.dataset.n_channels,
        window=normalizer_window(len(prep.validation_scaled), cfg.scoring.normalizer_window),
        method=cfg.scoring.method,
        epsilon=cfg.scoring.iqr_epsilon,
        smape_target=cfg.scoring.smape_target,
    )
    scoring.fit(errors)
    return Artifacts(
        model=model,
        scaler=prep.scaler,
        scoring=scoring,
        channel_names=prep.dataset.channel_names,
        sample_interval_seconds=prep.dataset.sample_interval_seconds,
        history=history,
    )


def score_test(artifacts: Artifacts, test_values: np.ndarray) -> ScoreStream:
    """Stream scores over raw (unscaled) test rows; indices start at window."""
    scaled = artifacts.scaler.transform(test_values)
    errors = forecast_errors(artifacts.model, scaled)
    return artifacts.scoring.stream(errors, first_index=artifacts.model.config.window)


# ---------------------------------------------------------------------------
# persistence


def save_artifacts(path, artifacts: Artifacts) -> None:
    sp = artifacts.scoring
    arrays = {
        "scaler_mins": artifacts.scaler.mins,
        "scaler_maxs": artifacts.scaler.maxs,
        "normalizer_history": sp.normalizer.history(),
        "validation_scores": sp.validation_scores,
    }
    if isinstance(sp.scorer, PcaScorer):
        arrays["pca_components"] = sp.scorer.components
        arrays["pca_mean"] = sp.scorer.mean
        if sp.scorer.eigenvalues is not None:
            arrays["pca_eigenvalues"] = sp.scorer.eigenvalues
    else:
        arrays["gauss_mean"] = sp.scorer.mean
        arrays["gauss_var"] = sp.scorer.var
    adjacency = artifacts.model.adjacency_sparse_values()
    if adjacency is not None:
        arrays["adjacency_sparse"] = adjacency
    meta = {
        "scoring_method": sp.method,
        "threshold": sp.threshold,
        "normalizer_window": sp.normalizer.window,
        "iqr_epsilon": sp.normalizer.epsilon,
        "smape_target": getattr(sp.scorer, "smape_target", 0.10),
        "pca_components_used": getattr(sp.scorer, "n_components", 0),
        "pca_fit_smape": getattr(sp.scorer, "fit_smape", float("nan")),
        "pca_selection_rule": getattr(sp.scorer, "selection_rule", ""),
        "sample_interval_seconds": artifacts.sample_interval_seconds,
        "history": [
            {"epoch": h.epoch, "train_loss": h.train_loss, "val_rmse": h.val_rmse}
            for h in artifacts.history
        ],
    }
    save_checkpoint(path, artifacts.model, artifacts.channel_names, arrays, meta)


def load_artifacts(path) -> Artifacts:
    model, channel_names, arrays, meta = load_checkpoint(path)
    for key in ("scaler_mins", "scaler_maxs", "normalizer_history", "validation_scores"):
        if key not in arrays:
            raise CheckpointError(f"checkpoint is missing array {key!r}")
    scaler = MinMaxScaler(mins=arrays["scaler_mins"], maxs=arrays["scaler_maxs"])
    method = meta.get("scoring_method", "pca")
    scoring = ScoringPipeline(
        n_channels=model.config.n_channels,
        window=int(meta["normalizer_window"]),
        method=method,
        epsilon=float(meta["iqr_epsilon"]),
        smape_target=float(meta.get("smape_target", 0.10)),
    )
    scoring.normalizer.preload(arrays["normalizer_history"])
    if method == "pca":
        for key in ("pca_components", "pca_mean"):
            if key not in arrays:
                raise CheckpointError(f"checkpoint is missing array {key!r}")
        scoring.scorer.components = arrays["pca_components"]
        scoring.scorer.mean = arrays["pca_mean"]
        scoring.scorer.n_components = int(meta["pca_components_used"])
        scoring.scorer.fit_smape = float(meta.get("pca_fit_smape", float("nan")))
        scoring.scorer.selection_rule = str(meta.get("pca_selection_rule", ""))
        if "pca_eigenvalues" in arrays:
            scoring.scorer.eigenvalues = arrays["pca_eigenvalues"]
    else:
        for key in ("gauss_mean", "gauss_var"):
            if key not in arrays:
                raise CheckpointError(f"checkpoint is missing array {key!r}")
        scoring.scorer.mean = arrays["gauss_mean"]
        scoring.scorer.var = arrays["gauss_var"]
    scoring.threshold = float(meta["threshold"])
    scoring.validation_scores = arrays["validation_scores"]
    history = list(meta.get("history", []))
    return Artifacts(
        model=model,
        scaler=scaler,
        scoring=scoring,
        channel_names=channel_names,
        sample_interval_seconds=float(meta.get("sample_interval_seconds", 1.0)),
        history=history,
    )


# ---------------------------------------------------------------------------
# score stream files


def write_score_stream(path, stream: ScoreStream, channel_names) -> None:
    """Plain-text table: index, score, flag, top-3 contributing channels."""
    names = list(channel_names)
    with open(path, "w") as fh:
        fh.write("# index score flag top_contributors\n")
        for i in range(len(stream.indices)):
            contrib = stream.contributions[i]
            top = np.argsort(-contrib, kind="stable")[:3]
            tops = "|".join(names[j] for j in top)
            fh.write(
                f"{int(stream.indices[i])} {stream.scores[i]:.9g} "
                f"{int(stream.flags[i])} {tops}\n"
            )


def read_score_stream(path):
    """Parse a score table back into (indices, scores, flags)."""
    indices, scores, flags = [], [], []
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) < 3:
                raise CheckpointError(
                    f"score file line {line_no}: expected 'index score flag ...'"
                )
            try:
                indices.append(int(parts[0]))
                scores.append(float(parts[1]))
                flags.append(int(parts[2]))
            except ValueError:
                raise CheckpointError(
                    f"score file line {line_no}: malformed numeric field"
                ) from None
    return (
        np.asarray(indices, dtype=np.int64),
        np.asarray(scores, dtype=np.float64),
        np.asarray(flags, dtype=np.int8),
    )


def write_contributions(path, stream: ScoreStream, channel_names) -> None:
    header = "index," + ",".join(channel_names)
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for i in range(len(stream.indices)):
            row = ",".join(repr(float(v)) for v in stream.contributions[i])
            fh.write(f"{int(stream.indices[i])},{row}\n")


def read_contributions(path):
    """Returns (indices, matrix, channel_names)."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if not header or header[0] != "index":
            raise CheckpointError("contributions file must start with an index column")
        names = tuple(header[1:])
        indices, rows = [], []
        for line_no, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != len(header):
                raise CheckpointError(
                    f"contributions line {line_no}: expected {len(header)} fields"
                )
            indices.append(int(parts[0]))
            rows.append([float(v) for v in parts[1:]])
    return np.asarray(indices, dtype=np.int64), np.asarray(rows), names
