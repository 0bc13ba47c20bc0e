"""Synthetic multivariate series with a known dependency graph and
planted anomalies.

Each channel is a sum of sinusoids plus AR(1) noise, coupled to its
parents through weighted, possibly lagged, linear edges. The AR(1)
innovations are drawn from a small bank of shared factors plus a faint
per-channel remainder, the way co-located monitoring channels share
underlying load drivers; one-step forecast residuals on normal data are
therefore low-rank, which is the regime subspace-projection scoring
expects. Three anomaly archetypes are planted in the test span only:

* ``point_spike``: a short additive outlier on one channel's displayed
  values; the spiked channel is the cause.
* ``correlation_break``: a hidden offset is injected into the *true*
  value of a root channel, so its dependents move with the shifted
  signal while the root's own displayed trace stays clean. The hidden
  root is the cause; it is invisible to per-channel detectors.
* ``lag_violation``: one channel stops responding to its parent (the
  coupling term is dropped). The parent's marginal distribution is
  untouched; the non-responding child is the cause.

Generation is a pure function of the spec: identical specs (including
seed) produce identical datasets.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .data import AnomalySegment, TimeSeriesDataset
from .errors import IngestionError, SpecError

ARCHETYPES = ("point_spike", "correlation_break", "lag_violation")


@dataclass(frozen=True)
class EdgeSpec:
    """Directed coupling: dst(t) += weight * src(t - lag)."""

    src: int
    dst: int
    lag: int
    weight: float


@dataclass(frozen=True)
class SyntheticSpec:
    n_channels: int = 8
    train_length: int = 20000
    test_length: int = 5000
    edges: tuple = ()
    anomaly_rate: float = 0.05
    anomaly_types: tuple = ARCHETYPES
    seed: int = 0
    sample_interval_seconds: float = 1.0
    noise_sigma: float = 0.3
    noise_rho: float = 0.7
    noise_factors: int = 2  # shared innovation drivers; 0 = independent channels
    idiosyncratic_scale: float = 0.03  # private innovation std, relative to noise_sigma
    idiosyncratic_profile: Optional[tuple] = None  # per-channel multiplier on the private part
    seasonal_amplitude: float = 1.0  # scale on the harmonic part; 0 = noise only
    spike_scale: tuple = (6.0, 10.0)
    break_scale: tuple = (4.0, 8.0)
    spike_length: tuple = (2, 8)
    segment_length: tuple = (20, 60)
    min_gap: int = 20
    start_margin: int = 120

    def validate(self) -> None:
        if self.n_channels < 1:
            raise SpecError(f"need at least one channel, got {self.n_channels}")
        if self.train_length < 1 or self.test_length < 1:
            raise SpecError("train and test lengths must be positive")
        if not 0.0 <= self.anomaly_rate < 1.0:
            raise SpecError(f"anomaly rate must be in [0, 1), got {self.anomaly_rate}")
        if self.noise_factors < 0:
            raise SpecError(f"noise_factors must be >= 0, got {self.noise_factors}")
        if self.idiosyncratic_scale < 0:
            raise SpecError("idiosyncratic_scale must be >= 0")
        if self.idiosyncratic_profile is not None:
            if len(self.idiosyncratic_profile) != self.n_channels:
                raise SpecError("idiosyncratic_profile length must match n_channels")
            if any(p < 0 for p in self.idiosyncratic_profile):
                raise SpecError("idiosyncratic_profile entries must be >= 0")
        if self.seasonal_amplitude < 0:
            raise SpecError("seasonal_amplitude must be >= 0")
        for a in self.anomaly_types:
            if a not in ARCHETYPES:
                raise SpecError(f"unknown anomaly type {a!r}")
        for e in self.edges:
            if not (0 <= e.src < self.n_channels and 0 <= e.dst < self.n_channels):
                raise SpecError(f"edge {e} references a channel out of range")
            if e.lag < 0:
                raise SpecError(f"edge {e} has negative lag")
        self._check_zero_lag_cycles()

    def _check_zero_lag_cycles(self) -> None:
        # A cycle whose lags sum to zero cannot be simulated; with
        # non-negative lags that is exactly a cycle among lag-0 edges.
        adj = {i: [] for i in range(self.n_channels)}
        for e in self.edges:
            if e.lag == 0:
                adj[e.src].append(e.dst)
        state = {}  # 1 = in progress, 2 = done

        def visit(u, trail):
            state[u] = 1
            for v in adj[u]:
                if state.get(v) == 1:
                    raise SpecError(
                        f"dependency cycle with zero total lag through channels {trail + [v]}"
                    )
                if state.get(v) is None:
                    visit(v, trail + [v])
            state[u] = 2

        for i in range(self.n_channels):
            if state.get(i) is None:
                visit(i, [i])

    def zero_lag_order(self) -> list:
        """Channel evaluation order respecting lag-0 edges (a DAG by validation)."""
        indeg = [0] * self.n_channels
        adj = {i: [] for i in range(self.n_channels)}
        for e in self.edges:
            if e.lag == 0:
                adj[e.src].append(e.dst)
                indeg[e.dst] += 1
        order, ready = [], [i for i in range(self.n_channels) if indeg[i] == 0]
        while ready:
            u = ready.pop()
            order.append(u)
            for v in adj[u]:
                indeg[v] -= 1
                if indeg[v] == 0:
                    ready.append(v)
        return order


def channel_name(i: int) -> str:
    return f"ch{i}"


def _ar1_noise(spec: SyntheticSpec, rng: np.random.Generator, total: int) -> np.ndarray:
    n = spec.n_channels
    k = min(spec.noise_factors, n)
    profile = np.ones(n)
    if spec.idiosyncratic_profile is not None:
        profile = np.asarray(spec.idiosyncratic_profile, dtype=np.float64)
    if k > 0:
        mixing = rng.normal(size=(k, n))
        # unit column norms: every channel gets unit-variance shared innovation
        mixing /= np.linalg.norm(mixing, axis=0, keepdims=True)
        eps = rng.normal(size=(total, k)) @ mixing
        eps += spec.idiosyncratic_scale * profile * rng.normal(size=(total, n))
        eps *= spec.noise_sigma
    else:
        eps = profile * rng.normal(scale=spec.noise_sigma, size=(total, n))
    noise = np.empty((total, n))
    noise[0] = eps[0]
    for s in range(1, total):
        noise[s] = spec.noise_rho * noise[s - 1] + eps[s]
    return noise


def _base_signals(spec: SyntheticSpec, rng: np.random.Generator, total: int) -> np.ndarray:
    t = np.arange(total, dtype=np.float64)
    out = np.zeros((total, spec.n_channels))
    # The two harmonic periods are shared by every channel (amplitude and
    # phase stay per-channel) and slow relative to the forecast window,
    # so the seasonal part is locally constant: a short-window forecaster
    # can pick the AR noise state straight off the observed values
    # instead of filtering it through fast oscillations, and its errors
    # stay dominated by the shared innovations.
    periods = [
        float(np.exp(rng.uniform(np.log(1000.0), np.log(4000.0)))) for _ in range(2)
    ]
    for i in range(spec.n_channels):
        for period in periods:
            amp = spec.seasonal_amplitude * rng.uniform(0.5, 1.2)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            out[:, i] += amp * np.sin(2.0 * np.pi * t / period + phase)
    out += _ar1_noise(spec, rng, total)
    return out


@dataclass
class _Plan:
    """Planted-anomaly schedule resolved before simulation."""

    segments: list = field(default_factory=list)  # AnomalySegment, test-frame indices
    true_offset: Optional[np.ndarray] = None  # [total, N] added to true values
    display_delta: Optional[np.ndarray] = None  # [total, N] added to display only
    dropped_edges: dict = field(default_factory=dict)  # edge index -> (start, end) total-frame


def _noise_unit(spec: SyntheticSpec) -> float:
    return spec.noise_sigma / np.sqrt(1.0 - spec.noise_rho**2)


def _plan_anomalies(spec: SyntheticSpec, rng: np.random.Generator) -> _Plan:
    plan = _Plan()
    total = spec.train_length + spec.test_length
    plan.true_offset = np.zeros((total, spec.n_channels))
    plan.display_delta = np.zeros((total, spec.n_channels))
    budget = int(round(spec.anomaly_rate * spec.test_length))
    if budget == 0 or not spec.anomaly_types:
        return plan
    unit = _noise_unit(spec)
    roots = sorted({e.src for e in spec.edges})
    taken = np.zeros(spec.test_length, dtype=bool)
    placed = 0
    mode_idx = 0
    tries = 0
    while placed < budget and tries < 1000:
        tries += 1
        mode = spec.anomaly_types[mode_idx % len(spec.anomaly_types)]
        if mode == "point_spike":
            length = int(rng.integers(spec.spike_length[0], spec.spike_length[1] + 1))
        else:
            length = int(rng.integers(spec.segment_length[0], spec.segment_length[1] + 1))
        length = min(length, budget - placed) or 1
        lo = spec.start_margin
        hi = spec.test_length - length - 1
        if hi <= lo:
            break
        start = int(rng.integers(lo, hi))
        pad_lo = max(0, start - spec.min_gap)
        pad_hi = min(spec.test_length, start + length + spec.min_gap)
        if taken[pad_lo:pad_hi].any():
            continue
        end = start + length - 1
        abs_lo = spec.train_length + start
        abs_hi = spec.train_length + end + 1
        if mode == "point_spike":
            ch = int(rng.integers(spec.n_channels))
            amp = rng.uniform(*spec.spike_scale) * unit * (1 if rng.random() < 0.5 else -1)
            plan.display_delta[abs_lo:abs_hi, ch] += amp
            causes = (channel_name(ch),)
        elif mode == "correlation_break":
            if not roots:
                mode_idx += 1
                continue
            ch = int(roots[rng.integers(len(roots))])
            amp = rng.uniform(*spec.break_scale) * unit * (1 if rng.random() < 0.5 else -1)
            plan.true_offset[abs_lo:abs_hi, ch] += amp
            causes = (channel_name(ch),)
        else:  # lag_violation
            if not spec.edges:
                mode_idx += 1
                continue
            ei = int(rng.integers(len(spec.edges)))
            plan.dropped_edges.setdefault(ei, []).append((abs_lo, abs_hi))
            causes = (channel_name(spec.edges[ei].dst),)
        plan.segments.append(AnomalySegment(start=start, end=end, mode=mode, causes=causes))
        taken[pad_lo:pad_hi] = True
        placed += length
        mode_idx += 1
    plan.segments.sort(key=lambda s: s.start)
    return plan


def generate(spec: SyntheticSpec) -> TimeSeriesDataset:
    """Simulate the spec into a train/test dataset with labelled segments."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    total = spec.train_length + spec.test_length
    base = _base_signals(spec, rng, total)
    plan = _plan_anomalies(spec, rng)

    in_edges = {i: [] for i in range(spec.n_channels)}
    for ei, e in enumerate(spec.edges):
        in_edges[e.dst].append((ei, e))
    order = spec.zero_lag_order()

    true = np.zeros((total, spec.n_channels))
    for t in range(total):
        for i in order:
            v = base[t, i] + plan.true_offset[t, i]
            for ei, e in in_edges[i]:
                if e.lag == 0:
                    src_val = true[t, e.src]
                elif t - e.lag >= 0:
                    src_val = true[t - e.lag, e.src]
                else:
                    continue
                dropped = any(
                    lo <= t < hi for lo, hi in plan.dropped_edges.get(ei, ())
                )
                if not dropped:
                    v += e.weight * src_val
            true[t, i] = v

    display = true - plan.true_offset + plan.display_delta

    labels = np.zeros(spec.test_length, dtype=np.int8)
    for seg in plan.segments:
        labels[seg.start : seg.end + 1] = 1

    return TimeSeriesDataset(
        channel_names=tuple(channel_name(i) for i in range(spec.n_channels)),
        train=display[: spec.train_length],
        test=display[spec.train_length :],
        test_labels=labels,
        sample_interval_seconds=spec.sample_interval_seconds,
        segments=tuple(plan.segments),
    )


# ---------------------------------------------------------------------------
# stock topologies


def chain_star_edges() -> tuple:
    """Mixed topology for the bundled benchmark: a hub plus two chains."""
    return (
        EdgeSpec(src=0, dst=1, lag=1, weight=0.8),
        EdgeSpec(src=0, dst=2, lag=2, weight=0.7),
        EdgeSpec(src=1, dst=3, lag=1, weight=0.6),
        EdgeSpec(src=2, dst=4, lag=1, weight=0.7),
        EdgeSpec(src=3, dst=5, lag=2, weight=0.6),
        EdgeSpec(src=4, dst=6, lag=1, weight=0.6),
        EdgeSpec(src=5, dst=7, lag=1, weight=0.5),
    )


def star_edges(n_channels: int = 8) -> tuple:
    """Hub channel 0 drives every other channel at staggered lags."""
    return tuple(
        EdgeSpec(src=0, dst=i, lag=1 + (i - 1) % 3, weight=0.7 + 0.05 * (i % 3))
        for i in range(1, n_channels)
    )


def benchmark_spec() -> SyntheticSpec:
    """The pinned end-to-end benchmark dataset (all three archetypes).

    The stochastic part dominates on purpose: innovations ride on one
    shared driver, so clean forecast errors line up along a single
    direction and the component picker can summarize them with a small
    basis. Large seasonal swings would instead bury that structure under
    channel-specific approximation error.
    """
    return SyntheticSpec(
        n_channels=8,
        train_length=20000,
        test_length=5000,
        edges=chain_star_edges(),
        anomaly_rate=0.05,
        anomaly_types=ARCHETYPES,
        seed=2024,
        noise_factors=1,
        idiosyncratic_scale=0.01,
        seasonal_amplitude=0.1,
    )


def star_spec() -> SyntheticSpec:
    """Root-cause benchmark: stealth breaks on the hub of a star graph.

    One shared driver keeps the clean errors low-rank (so the component
    picker retains a small basis and per-channel blame stays
    informative).  The hub alone carries a loud private innovation: a
    dependent's own history proxies everything persistent or shared, so
    that private part is the only signal a hub edge can add, and making
    it loud is what forces the learned graph to recover the star.
    Dependents keep a faint private part to stay off exact manifolds."""
    n = 8
    return SyntheticSpec(
        n_channels=n,
        train_length=6000,
        test_length=4000,
        edges=star_edges(n),
        anomaly_rate=0.06,
        anomaly_types=("correlation_break",),
        seed=77,
        noise_factors=1,
        idiosyncratic_scale=1.0,
        idiosyncratic_profile=(0.9,) + (0.05,) * (n - 1),
        seasonal_amplitude=0.1,
    )


# ---------------------------------------------------------------------------
# on-disk form

_FORMAT = "stgad-dataset-v1"


def write_dataset(ds: TimeSeriesDataset, out_dir, spec: Optional[SyntheticSpec] = None) -> None:
    """Write train.csv, test.csv (with a label column) and metadata.txt."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    header = ",".join(ds.channel_names)
    with open(out / "train.csv", "w") as fh:
        fh.write(header + "\n")
        for row in ds.train:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    labels = ds.test_labels
    if labels is None:
        labels = np.zeros(len(ds.test), dtype=np.int8)
    with open(out / "test.csv", "w") as fh:
        fh.write(header + ",label\n")
        for row, lab in zip(ds.test, labels):
            fh.write(",".join(repr(float(v)) for v in row) + f",{int(lab)}\n")
    with open(out / "metadata.txt", "w") as fh:
        fh.write(f"format = {_FORMAT}\n")
        fh.write(f"sample_interval_seconds = {ds.sample_interval_seconds!r}\n")
        if spec is not None:
            fh.write(f"seed = {spec.seed}\n")
            fh.write(f"anomaly_rate = {spec.anomaly_rate!r}\n")
        for seg in ds.segments or ():
            causes = "|".join(seg.causes)
            fh.write(f"segment = {seg.start}:{seg.end}:{seg.mode}:{causes}\n")


def load_dataset_dir(path) -> TimeSeriesDataset:
    """Load a directory written by :func:`write_dataset`."""
    from .data import load_csv

    root = Path(path)
    meta = root / "metadata.txt"
    interval = 1.0
    segments = []
    if meta.exists():
        for line_no, line in enumerate(meta.read_text().splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise IngestionError(f"metadata line {line_no}: expected key = value")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key == "sample_interval_seconds":
                interval = float(value)
            elif key == "segment":
                parts = value.split(":")
                if len(parts) != 4:
                    raise IngestionError(
                        f"metadata line {line_no}: segment needs start:end:mode:causes"
                    )
                start, end, mode, causes = parts
                segments.append(
                    AnomalySegment(
                        start=int(start),
                        end=int(end),
                        mode=mode,
                        causes=tuple(c for c in causes.split("|") if c),
                    )
                )
    ds = load_csv(
        root / "train.csv",
        root / "test.csv",
        sample_interval_seconds=interval,
    )
    if segments:
        ds.segments = tuple(sorted(segments, key=lambda s: s.start))
    return ds
