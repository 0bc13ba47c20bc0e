"""Gated temporal convolutions with inception-style filter banks.

A temporal block convolves the input with a bank of dilated filters of
several widths in parallel. Wider filters shrink the time axis more, so
every branch is truncated to the widest branch's output length before
the branches are concatenated back to the full channel count. Two such
banks run side by side: a tanh filter bank modulated by a sigmoid gate
bank. Output lengths therefore follow the widest filter only, and the
receptive field after L residual layers obeys

    R = L * (k - 1) + 1                          dilation_base = 1
    R = 1 + (k - 1) * (base^L - 1) / (base - 1)  dilation_base > 1

with k the widest filter width.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .engine import array as ar
from .engine.array import DiffArray
from .errors import ContractError
from .gcn import kaiming_normal

DEFAULT_WIDTHS = (2, 3, 6, 7)


def widest(widths: Sequence[int]) -> int:
    return max(widths)


def receptive_field(layers: int, width: int, dilation_base: int = 1) -> int:
    """Input length consumed by ``layers`` stacked blocks of widest filter ``width``."""
    if layers < 1:
        raise ContractError(f"layers must be >= 1, got {layers}")
    if width < 1:
        raise ContractError(f"width must be >= 1, got {width}")
    if dilation_base < 1:
        raise ContractError(f"dilation base must be >= 1, got {dilation_base}")
    if dilation_base == 1:
        return layers * (width - 1) + 1
    growth = (dilation_base**layers - 1) // (dilation_base - 1)
    return 1 + (width - 1) * growth


def length_schedule(q0: int, layers: int, width: int, dilation_base: int = 1) -> list:
    """Time-axis lengths [Q_0, Q_1, ..., Q_L] through the layer stack."""
    qs = [q0]
    for layer in range(layers):
        qs.append(qs[-1] - dilation_base**layer * (width - 1))
    if qs[-1] < 1:
        raise ContractError(
            f"input length {q0} too short for {layers} layers of width {width}"
        )
    return qs


def pad_to_receptive_field(values: np.ndarray, field: int) -> np.ndarray:
    """Left-pad [B, C, N, T] with zeros so T >= field."""
    t = values.shape[3]
    if t >= field:
        return values
    pad = np.zeros(values.shape[:3] + (field - t,), dtype=values.dtype)
    return np.concatenate([pad, values], axis=3)


class InceptionConv:
    """Parallel dilated convolutions, truncated to a common length and stacked."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        widths: Sequence[int] = DEFAULT_WIDTHS,
        dilation: int = 1,
        rng: Optional[np.random.Generator] = None,
        dtype=np.float64,
    ):
        widths = tuple(widths)
        if not widths:
            raise ContractError("need at least one filter width")
        if out_channels % len(widths) != 0:
            raise ContractError(
                f"out channels {out_channels} not divisible by {len(widths)} branches"
            )
        if rng is None:
            rng = np.random.default_rng(0)
        self.widths = widths
        self.dilation = int(dilation)
        per = out_channels // len(widths)
        self.kernels = [
            ar.parameter(
                kaiming_normal(rng, (per, in_channels, 1, w), in_channels * w, dtype)
            )
            for w in widths
        ]
        self.bias = ar.parameter(np.zeros(out_channels, dtype=dtype))

    def parameters(self):
        named = [(f"conv.w{w}", k) for w, k in zip(self.widths, self.kernels)]
        named.append(("conv.bias", self.bias))
        return named

    def __call__(self, x: DiffArray) -> DiffArray:
        keep = x.values.shape[3] - self.dilation * (widest(self.widths) - 1)
        branches = [
            ar.slice_time_tail(ar.conv1d_dilated(x, k, self.dilation), keep)
            for k in self.kernels
        ]
        return ar.bias_add(ar.concat_channels(branches), self.bias)


class GatedTemporalConv:
    """tanh(filter bank) * sigmoid(gate bank)."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        widths: Sequence[int] = DEFAULT_WIDTHS,
        dilation: int = 1,
        rng: Optional[np.random.Generator] = None,
        dtype=np.float64,
    ):
        if rng is None:
            rng = np.random.default_rng(0)
        self.filters = InceptionConv(in_channels, out_channels, widths, dilation, rng, dtype)
        self.gates = InceptionConv(in_channels, out_channels, widths, dilation, rng, dtype)

    def parameters(self):
        named = [(f"tcn.filter.{n}", p) for n, p in self.filters.parameters()]
        named += [(f"tcn.gate.{n}", p) for n, p in self.gates.parameters()]
        return named

    def __call__(self, x: DiffArray) -> DiffArray:
        return ar.mul(ar.tanh(self.filters(x)), ar.sigmoid(self.gates(x)))
