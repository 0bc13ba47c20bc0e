"""One-step-ahead forecaster: interlaced temporal convolutions and graph
convolutions over a learned adjacency, with skip connections from every
depth collected into a per-node regression head.

Layer l maps a [B, C, N, Q_l] block to [B, C, N, Q_{l+1}] as

    Z^(l+1) = truncate(Z^l, Q_{l+1}) + GCN(TCN(Z^l))

and a skip convolution spanning the whole remaining time axis turns each
Z^l into a [B, skip, N, 1] summary; the sum of all summaries (the input
projection included) feeds a two-stage MLP that emits one value per node.
Windows shorter than the receptive field are left-padded with zeros.

Supported ablations: ``no_mtcl`` replaces the learned adjacency with the
complete directed graph, ``no_gcn`` swaps every graph convolution for a
per-node linear layer, and ``mod_tcn`` collapses the inception banks to a
single width-1 filter.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .data import count_windows, iter_windows
from .engine import array as ar
from .engine.array import DiffArray
from .engine.optim import Adam
from .errors import CheckpointError, ContractError, NumericError
from .gcn import MixHopBlock, kaiming_normal
from .graph import LearnedGraph
from .tcn import GatedTemporalConv, length_schedule, pad_to_receptive_field, receptive_field, widest

ABLATIONS = ("none", "no_mtcl", "no_gcn", "mod_tcn")
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    n_channels: int
    window: int = 5
    layers: int = 2
    conv_channels: int = 16
    skip_channels: int = 32
    embed_dim: int = 256
    alpha: float = 20.0
    topk: int = 15
    retain: float = 0.1
    hops: int = 2
    dilation_base: int = 1
    widths: tuple = (2, 3, 6, 7)
    head_hidden: int = 32
    share_gcn_directions: bool = False
    ablation: str = "none"
    dtype: str = "float64"
    seed: int = 0

    def __post_init__(self):
        if self.ablation not in ABLATIONS:
            raise ContractError(f"unknown ablation {self.ablation!r}")
        if self.dtype not in ("float32", "float64"):
            raise ContractError(f"dtype must be float32 or float64, got {self.dtype!r}")
        if self.window < 1:
            raise ContractError(f"window must be >= 1, got {self.window}")


class _LinearBlock:
    """Per-node linear stand-in for the graph convolution (no_gcn)."""

    def __init__(self, in_channels, out_channels, rng, dtype):
        self.weight = ar.parameter(
            kaiming_normal(rng, (in_channels, out_channels), in_channels, dtype)
        )
        self.bias = ar.parameter(np.zeros(out_channels, dtype=dtype))

    def parameters(self):
        return [("linear.weight", self.weight), ("linear.bias", self.bias)]

    def __call__(self, x):
        return ar.bias_add(ar.channel_mix(x, self.weight), self.bias)


class ForecastModel:
    def __init__(self, config: ModelConfig):
        self.config = config
        self.np_dtype = np.float32 if config.dtype == "float32" else np.float64
        rng = np.random.default_rng([config.seed, 0])
        n, c, s = config.n_channels, config.conv_channels, config.skip_channels
        widths = (1,) if config.ablation == "mod_tcn" else tuple(config.widths)
        self.widths = widths
        k_eff = widest(widths)
        field_len = receptive_field(config.layers, k_eff, config.dilation_base)
        self.q0 = max(config.window, field_len)
        self.lengths = length_schedule(self.q0, config.layers, k_eff, config.dilation_base)

        self.graph: Optional[LearnedGraph] = None
        if config.ablation in ("none", "mod_tcn"):
            self.graph = LearnedGraph(
                n, config.embed_dim, config.alpha, config.topk, rng, self.np_dtype
            )
        self._complete_adj = None
        if config.ablation == "no_mtcl":
            dense = np.ones((n, n), dtype=self.np_dtype) - np.eye(n, dtype=self.np_dtype)
            self._complete_adj = ar.constant(dense)

        self.in_weight = ar.parameter(kaiming_normal(rng, (1, c), 1, self.np_dtype))
        self.in_bias = ar.parameter(np.zeros(c, dtype=self.np_dtype))

        self.tcn_layers = []
        self.gcn_layers = []
        for layer in range(config.layers):
            dilation = config.dilation_base**layer
            self.tcn_layers.append(
                GatedTemporalConv(c, c, widths, dilation, rng, self.np_dtype)
            )
            if config.ablation == "no_gcn":
                self.gcn_layers.append(_LinearBlock(c, c, rng, self.np_dtype))
            else:
                self.gcn_layers.append(
                    MixHopBlock(
                        c, c, config.hops, config.retain,
                        config.share_gcn_directions, rng, self.np_dtype,
                    )
                )

        self.skip_weights = [
            ar.parameter(
                kaiming_normal(rng, (s, c, 1, q), c * q, self.np_dtype)
            )
            for q in self.lengths
        ]
        self.head1_w = ar.parameter(kaiming_normal(rng, (s, config.head_hidden), s, self.np_dtype))
        self.head1_b = ar.parameter(np.zeros(config.head_hidden, dtype=self.np_dtype))
        self.head2_w = ar.parameter(kaiming_normal(rng, (config.head_hidden, 1), config.head_hidden, self.np_dtype))
        self.head2_b = ar.parameter(np.zeros(1, dtype=self.np_dtype))

    # ------------------------------------------------------------------
    def parameters(self):
        named = []
        if self.graph is not None:
            named += self.graph.parameters()
        named += [("input.weight", self.in_weight), ("input.bias", self.in_bias)]
        for i, (tcn, gcn) in enumerate(zip(self.tcn_layers, self.gcn_layers)):
            named += [(f"layer{i}.{n}", p) for n, p in tcn.parameters()]
            named += [(f"layer{i}.{n}", p) for n, p in gcn.parameters()]
        named += [(f"skip{i}.weight", w) for i, w in enumerate(self.skip_weights)]
        named += [
            ("head.stage1.weight", self.head1_w),
            ("head.stage1.bias", self.head1_b),
            ("head.stage2.weight", self.head2_w),
            ("head.stage2.bias", self.head2_b),
        ]
        return named

    def adjacency_dense(self) -> Optional[np.ndarray]:
        if self.graph is not None:
            return self.graph.build_adjacency().values
        if self._complete_adj is not None:
            return self._complete_adj.values.copy()
        return None

    def adjacency_sparse_values(self) -> Optional[np.ndarray]:
        if self.graph is not None:
            return self.graph.adjacency_sparse().values
        if self._complete_adj is not None:
            return self._complete_adj.values.copy()
        return None

    def _adjacency_node(self) -> Optional[DiffArray]:
        if self.graph is not None:
            return self.graph.adjacency_sparse()
        return self._complete_adj

    # ------------------------------------------------------------------
    def forward(self, inputs: np.ndarray) -> DiffArray:
        """inputs [B, 1, N, window] -> forecast block [B, 1, N, 1]."""
        if inputs.ndim != 4 or inputs.shape[1] != 1:
            raise ContractError("forward expects [batch, 1, node, time] input")
        if inputs.shape[2] != self.config.n_channels:
            raise ContractError(
                f"model has {self.config.n_channels} channels, input {inputs.shape[2]}"
            )
        padded = pad_to_receptive_field(inputs.astype(self.np_dtype, copy=False), self.q0)
        if padded.shape[3] != self.q0:
            raise ContractError(
                f"window {inputs.shape[3]} longer than configured length {self.q0}"
            )
        x = ar.constant(padded)
        z = ar.bias_add(ar.channel_mix(x, self.in_weight), self.in_bias)
        adj = self._adjacency_node()
        skip = ar.conv1d_dilated(z, self.skip_weights[0])
        for layer, (tcn, gcn, q_next) in enumerate(
            zip(self.tcn_layers, self.gcn_layers, self.lengths[1:])
        ):
            t = tcn(z)
            g = gcn(t) if adj is None else gcn(t, adj)
            z = ar.add(ar.slice_time_tail(z, q_next), g)
            skip = ar.add(skip, ar.conv1d_dilated(z, self.skip_weights[layer + 1]))
        h = ar.relu(skip)
        h = ar.relu(ar.bias_add(ar.channel_mix(h, self.head1_w), self.head1_b))
        return ar.bias_add(ar.channel_mix(h, self.head2_w), self.head2_b)

    def forecast(self, inputs: np.ndarray) -> np.ndarray:
        """inputs [B, 1, N, window] -> point forecasts [B, N]."""
        return self.forward(inputs).values[:, 0, :, 0]

    def forecast_series(self, values: np.ndarray, batch_size: int = 256) -> np.ndarray:
        """Forecast row t from rows t-window..t-1 for every t in [window, T).

        Returns [T - window, N]; row i is the forecast for source row
        window + i. Windows never cross the bounds of ``values``.
        """
        w = self.config.window
        total = count_windows(len(values), w)
        out = np.empty((total, values.shape[1]), dtype=self.np_dtype)
        for batch in iter_windows(values, w, batch_size, dtype=self.np_dtype):
            out[batch.ends - w] = self.forecast(batch.inputs)
        return out


# ---------------------------------------------------------------------------
# training


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_rmse: Optional[float]


def _clip_gradients(params: Sequence[DiffArray], max_norm: float) -> None:
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float(np.sum(p.grad.astype(np.float64) ** 2))
    norm = float(np.sqrt(total))
    if norm > max_norm and norm > 0:
        scale = max_norm / norm
        for p in params:
            if p.grad is not None:
                p.grad *= scale


def validation_rmse(model: ForecastModel, values: np.ndarray, batch_size: int = 256) -> Optional[float]:
    if count_windows(len(values), model.config.window) == 0:
        return None
    preds = model.forecast_series(values, batch_size)
    targets = values[model.config.window :]
    return float(np.sqrt(np.mean((preds - targets.astype(preds.dtype)) ** 2)))


def train_model(
    model: ForecastModel,
    train_values: np.ndarray,
    validation_values: Optional[np.ndarray] = None,
    epochs: int = 20,
    batch_size: int = 64,
    lr: float = 3e-4,
    betas: tuple = (0.9, 0.999),
    grad_clip: Optional[float] = None,
    log: Optional[Callable[[EpochStats], None]] = None,
) -> list:
    """Adam training with per-epoch shuffling and a best-validation snapshot.

    The model is left holding the parameters of the epoch with the lowest
    validation RMSE (final parameters when no validation windows exist).
    Same seed, same data, same configuration gives an identical parameter
    trajectory. A non-finite loss or gradient aborts with context.
    """
    if count_windows(len(train_values), model.config.window) == 0:
        raise ContractError(
            f"training needs more than window={model.config.window} rows, "
            f"got {len(train_values)}"
        )
    named = model.parameters()
    params = [p for _, p in named]
    opt = Adam(params, lr=lr, betas=betas)
    shuffle_rng = np.random.default_rng([model.config.seed, 1])
    history = []
    best_rmse = None
    best_values = None
    for epoch in range(1, epochs + 1):
        losses = []
        for b, batch in enumerate(
            iter_windows(
                train_values, model.config.window, batch_size,
                shuffle=True, rng=shuffle_rng, dtype=model.np_dtype,
            )
        ):
            opt.zero_grad()
            pred = model.forward(batch.inputs)
            target = ar.constant(batch.targets[:, None, :, None])
            diff = ar.sub(pred, target)
            loss = ar.mean_all(ar.mul(diff, diff))
            value = float(loss.values)
            if not np.isfinite(value):
                raise NumericError(f"non-finite loss at epoch {epoch} batch {b}")
            ar.backward(loss)
            if grad_clip is not None:
                _clip_gradients(params, grad_clip)
            try:
                opt.step()
            except NumericError as exc:
                raise NumericError(f"epoch {epoch} batch {b}: {exc}") from None
            losses.append(value)
        rmse = (
            validation_rmse(model, validation_values)
            if validation_values is not None
            else None
        )
        stats = EpochStats(epoch=epoch, train_loss=float(np.mean(losses)), val_rmse=rmse)
        history.append(stats)
        if log is not None:
            log(stats)
        if rmse is not None and (best_rmse is None or rmse < best_rmse):
            best_rmse = rmse
            best_values = [p.values.copy() for p in params]
    if best_values is not None:
        for p, v in zip(params, best_values):
            p.values = v
    return history


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(
    path,
    model: ForecastModel,
    channel_names: Sequence[str],
    arrays: Optional[dict] = None,
    meta: Optional[dict] = None,
) -> None:
    """Single-file container: named parameter arrays + a JSON metadata blob."""
    payload = {}
    for name, p in model.parameters():
        payload["param::" + name] = p.values
    for name, arr in (arrays or {}).items():
        payload["extra::" + name] = np.asarray(arr)
    config = asdict(model.config)
    config["widths"] = list(config["widths"])
    blob = {
        "format_version": CHECKPOINT_VERSION,
        "config": config,
        "channel_names": list(channel_names),
        "meta": meta or {},
    }
    payload["meta"] = np.array(json.dumps(blob))
    with open(path, "wb") as fh:  # savez on a handle keeps the exact filename
        np.savez(fh, **payload)


def load_checkpoint(path):
    """Returns (model, channel_names, arrays, meta). Validates shape and names."""
    try:
        npz = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise CheckpointError(f"cannot read checkpoint: {exc}") from None
    with npz:
        if "meta" not in npz:
            raise CheckpointError("checkpoint has no metadata record")
        try:
            blob = json.loads(str(npz["meta"][()]))
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"checkpoint metadata is not valid JSON: {exc}") from None
        version = blob.get("format_version")
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(
                f"checkpoint format version {version} unsupported (expected {CHECKPOINT_VERSION})"
            )
        config_dict = dict(blob["config"])
        config_dict["widths"] = tuple(config_dict["widths"])
        config = ModelConfig(**config_dict)
        model = ForecastModel(config)
        stored = {k[len("param::") :] for k in npz.files if k.startswith("param::")}
        expected = {name for name, _ in model.parameters()}
        missing = expected - stored
        if missing:
            raise CheckpointError(f"checkpoint is missing parameters: {sorted(missing)}")
        extra_params = stored - expected
        if extra_params:
            raise CheckpointError(f"checkpoint has unknown parameters: {sorted(extra_params)}")
        for name, p in model.parameters():
            arr = npz["param::" + name]
            if arr.shape != p.values.shape:
                raise CheckpointError(
                    f"parameter {name}: stored shape {arr.shape} vs expected {p.values.shape}"
                )
            p.values = arr.astype(model.np_dtype, copy=True)
        arrays = {
            k[len("extra::") :]: npz[k] for k in npz.files if k.startswith("extra::")
        }
        channel_names = tuple(blob["channel_names"])
        if len(channel_names) != config.n_channels:
            raise CheckpointError("channel name list does not match channel count")
    return model, channel_names, arrays, blob.get("meta", {})
