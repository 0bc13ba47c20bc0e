"""Dataset ingestion and preparation.

File contract: a dataset is one CSV per split with a header row naming
the channels. Anomaly labels for the test split come either from a 0/1
column named ``label`` (or any name passed explicitly) or from a sibling
single-column file with one value per data row. All ingestion errors
carry 1-based file line numbers.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

from .errors import ContractError, DimensionError, IngestionError


@dataclass(frozen=True)
class AnomalySegment:
    """A labelled anomalous stretch of the test split, inclusive bounds."""

    start: int
    end: int
    mode: str = ""
    causes: tuple = ()


@dataclass
class TimeSeriesDataset:
    channel_names: tuple
    train: np.ndarray  # [T_train, N] float64
    test: np.ndarray  # [T_test, N] float64
    test_labels: Optional[np.ndarray] = None  # [T_test] {0,1}
    sample_interval_seconds: float = 1.0
    segments: Optional[tuple] = None  # cause-annotated AnomalySegments

    def __post_init__(self):
        if self.train.ndim != 2 or self.test.ndim != 2:
            raise DimensionError("dataset splits must be [time, channel] matrices")
        if self.train.shape[1] != self.test.shape[1]:
            raise DimensionError(
                f"train has {self.train.shape[1]} channels, test {self.test.shape[1]}"
            )
        if len(self.channel_names) != self.train.shape[1]:
            raise DimensionError("channel name count does not match data width")
        if self.test_labels is not None and len(self.test_labels) != len(self.test):
            raise DimensionError("label length does not match test length")

    @property
    def n_channels(self) -> int:
        return self.train.shape[1]


@dataclass(frozen=True)
class Frame:
    channel_names: tuple
    values: np.ndarray
    labels: Optional[np.ndarray]


def _parse_float(text: str, line_no: int, col_name: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise IngestionError(
            f"line {line_no}: column {col_name!r} has non-numeric value {text!r}"
        ) from None
    if not np.isfinite(v):
        raise IngestionError(
            f"line {line_no}: column {col_name!r} has non-finite value {text!r}"
        )
    return v


def _parse_label(text: str, line_no: int) -> int:
    try:
        v = float(text)
    except ValueError:
        raise IngestionError(f"line {line_no}: label value {text!r} is not 0 or 1") from None
    if v not in (0.0, 1.0):
        raise IngestionError(f"line {line_no}: label value {text!r} is not 0 or 1")
    return int(v)


def read_frame(path, label_column: str = "label") -> Frame:
    """Read one CSV split. The label column, when present, is split out."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError(f"{path.name}: file is empty") from None
        header = [h.strip() for h in header]
        if any(not h for h in header):
            raise IngestionError(f"{path.name}: header has an unnamed column")
        if len(set(header)) != len(header):
            raise IngestionError(f"{path.name}: header has duplicate column names")
        label_idx = header.index(label_column) if label_column in header else None
        names = [h for i, h in enumerate(header) if i != label_idx]
        if not names:
            raise IngestionError(f"{path.name}: no data columns besides the label")
        rows = []
        labels = [] if label_idx is not None else None
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue  # ignore trailing blank lines
            if len(row) != len(header):
                raise IngestionError(
                    f"line {line_no}: expected {len(header)} fields, got {len(row)}"
                )
            try:
                parsed = [float(v) for v in row]
                bad = not all(np.isfinite(parsed))
            except ValueError:
                parsed, bad = None, True
            if bad:  # slow path only to name the offending column
                parsed = []
                for i, v in enumerate(row):
                    if i == label_idx:
                        parsed.append(_parse_label(v, line_no))
                    else:
                        parsed.append(_parse_float(v, line_no, header[i]))
            if label_idx is not None:
                labels.append(_parse_label(row[label_idx], line_no))
                del parsed[label_idx]
            rows.append(parsed)
    if not rows:
        raise IngestionError(f"{path.name}: no data rows")
    values = np.asarray(rows, dtype=np.float64)
    lab = np.asarray(labels, dtype=np.int8) if labels is not None else None
    return Frame(tuple(names), values, lab)


def read_label_file(path, n_rows: int) -> np.ndarray:
    """Sibling label file: one 0/1 value per line, count matching the data."""
    path = Path(path)
    out = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            out.append(_parse_label(text, line_no))
    if len(out) != n_rows:
        raise IngestionError(
            f"{path.name}: {len(out)} labels for {n_rows} data rows"
        )
    return np.asarray(out, dtype=np.int8)


def load_csv(
    train_path,
    test_path,
    label_column: str = "label",
    label_path=None,
    sample_interval_seconds: float = 1.0,
) -> TimeSeriesDataset:
    """Load a train/test CSV pair into a dataset.

    Test labels come from ``label_path`` when given, otherwise from the
    label column if the test CSV has one. A label column in the train CSV
    is dropped (it should be all zero; anything else draws a warning).
    """
    train = read_frame(train_path, label_column)
    test = read_frame(test_path, label_column)
    if train.channel_names != test.channel_names:
        raise IngestionError(
            "train and test CSVs disagree on channel names: "
            f"{train.channel_names[:4]}... vs {test.channel_names[:4]}..."
        )
    if train.labels is not None and np.any(train.labels != 0):
        warnings.warn("train split has nonzero labels; they are ignored")
    labels = test.labels
    if label_path is not None:
        labels = read_label_file(label_path, len(test.values))
    return TimeSeriesDataset(
        channel_names=train.channel_names,
        train=train.values,
        test=test.values,
        test_labels=labels,
        sample_interval_seconds=sample_interval_seconds,
    )


def median_downsample(
    values: np.ndarray, stride: int, labels: Optional[np.ndarray] = None
):
    """Median over non-overlapping blocks of ``stride`` rows.

    A trailing partial block is reduced too. Labels reduce by max, so a
    block containing any anomalous point stays anomalous. The sample
    interval grows by the same factor; callers track that.
    """
    if stride < 1:
        raise ContractError(f"stride must be >= 1, got {stride}")
    if stride == 1:
        return (values.copy(), None if labels is None else labels.copy())
    t = len(values)
    full = t // stride
    parts = []
    if full:
        parts.append(np.median(values[: full * stride].reshape(full, stride, -1), axis=1))
    if t % stride:
        parts.append(np.median(values[full * stride :], axis=0, keepdims=True))
    out = np.concatenate(parts, axis=0)
    out_labels = None
    if labels is not None:
        chunks = []
        if full:
            chunks.append(labels[: full * stride].reshape(full, stride).max(axis=1))
        if t % stride:
            chunks.append(labels[full * stride :].max(keepdims=True))
        out_labels = np.concatenate(chunks)
    return out, out_labels


@dataclass
class MinMaxScaler:
    """Per-channel min-max scaling fitted on the training split only."""

    mins: Optional[np.ndarray] = None
    maxs: Optional[np.ndarray] = None

    def fit(self, values: np.ndarray) -> "MinMaxScaler":
        if values.ndim != 2 or len(values) == 0:
            raise DimensionError("scaler fit needs a non-empty [time, channel] matrix")
        self.mins = values.min(axis=0)
        self.maxs = values.max(axis=0)
        return self

    def transform(self, values: np.ndarray) -> np.ndarray:
        if self.mins is None:
            raise ContractError("scaler used before fit")
        if values.ndim != 2 or values.shape[1] != len(self.mins):
            raise DimensionError(
                f"scaler fitted on {len(self.mins)} channels, got {values.shape}"
            )
        span = self.maxs - self.mins
        out = np.zeros_like(values, dtype=np.float64)
        live = span > 0  # constant channels map to zero
        out[:, live] = (values[:, live] - self.mins[live]) / span[live]
        return out


def split_validation(values: np.ndarray, ratio: float):
    """Chronological split: the trailing floor(ratio * T) rows are validation."""
    if not 0.0 <= ratio < 1.0:
        raise ContractError(f"validation ratio must be in [0, 1), got {ratio}")
    n_val = int(np.floor(ratio * len(values)))
    cut = len(values) - n_val
    return values[:cut], values[cut:]


@dataclass
class WindowBatch:
    inputs: np.ndarray  # [B, 1, N, w]
    targets: np.ndarray  # [B, N]
    ends: np.ndarray  # [B] target row indices into the source matrix


def count_windows(n_rows: int, window: int) -> int:
    return max(0, n_rows - window)


def iter_windows(
    values: np.ndarray,
    window: int,
    batch_size: int,
    shuffle: bool = False,
    rng: Optional[np.random.Generator] = None,
    dtype=np.float64,
) -> Iterator[WindowBatch]:
    """Yield (history window, next row) pairs in batches.

    Targets run over rows window..T-1, so a matrix of T rows yields
    T - window pairs and no window ever crosses the end of the matrix.
    """
    if window < 1:
        raise ContractError(f"window must be >= 1, got {window}")
    if batch_size < 1:
        raise ContractError(f"batch size must be >= 1, got {batch_size}")
    t = len(values)
    if count_windows(t, window) == 0:
        return
    ends = np.arange(window, t)
    if shuffle:
        if rng is None:
            raise ContractError("shuffle requested without a random generator")
        ends = rng.permutation(ends)
    # sliding[i] is rows i..i+window-1 as an [N, window] block
    sliding = np.lib.stride_tricks.sliding_window_view(values, window, axis=0)
    for lo in range(0, len(ends), batch_size):
        batch = ends[lo : lo + batch_size]
        inputs = np.ascontiguousarray(sliding[batch - window][:, None], dtype=dtype)
        targets = values[batch].astype(dtype, copy=True)
        yield WindowBatch(inputs=inputs, targets=targets, ends=batch.copy())
