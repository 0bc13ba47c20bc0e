"""Graph convolution by mix-hop propagation.

Each hop blends the layer input back in (information retention) before
diffusing along the row-normalized adjacency:

    H^0 = X;  H^(k+1) = retain * X + (1 - retain) * A_norm @ H^k

and every hop, including hop zero, gets its own output projection whose
results are summed. Forward and backward edge directions (A and A^T) run
as separate passes with their own projections unless weight sharing is
requested, and the two results are added.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .engine import array as ar
from .engine.array import DiffArray
from .errors import ContractError, DimensionError


def kaiming_normal(rng: np.random.Generator, shape, fan_in: int, dtype=np.float64):
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), shape).astype(dtype)


def mixhop_forward(
    x: DiffArray,
    adj_norm: DiffArray,
    projections: Sequence[DiffArray],
    retain: float,
) -> DiffArray:
    """Mix-hop diffusion with per-hop projections summed into one output.

    Accepts either a [B, C, N, T] block (projections are [C, C_out]) or a
    plain [N, C] feature matrix (projections are [C, C_out]).
    """
    if not projections:
        raise ContractError("mixhop needs at least the hop-0 projection")
    if not 0.0 <= retain <= 1.0:
        raise ContractError(f"retain ratio must be in [0, 1], got {retain}")
    if x.values.ndim == 4:
        mix, project = ar.node_mix, ar.channel_mix
    elif x.values.ndim == 2:
        mix, project = ar.matmul, ar.matmul
    else:
        raise DimensionError("mixhop input must be [B,C,N,T] or [N,C]")
    h = x
    out = project(h, projections[0])
    for theta in projections[1:]:
        h = ar.add(x * retain, mix(adj_norm, h) * (1.0 - retain))
        out = ar.add(out, project(h, theta))
    return out


class MixHopBlock:
    """Bidirectional mix-hop GCN over a learned adjacency."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        hops: int = 2,
        retain: float = 0.1,
        share_directions: bool = False,
        rng: Optional[np.random.Generator] = None,
        dtype=np.float64,
    ):
        if hops < 0:
            raise ContractError(f"hops must be >= 0, got {hops}")
        if rng is None:
            rng = np.random.default_rng(0)
        self.hops = hops
        self.retain = float(retain)
        self.share_directions = share_directions

        def bank():
            return [
                ar.parameter(kaiming_normal(rng, (in_channels, out_channels), in_channels, dtype))
                for _ in range(hops + 1)
            ]

        self.forward_proj = bank()
        self.backward_proj = self.forward_proj if share_directions else bank()

    def parameters(self):
        named = [
            (f"gcn.fwd.hop{k}", p) for k, p in enumerate(self.forward_proj)
        ]
        if not self.share_directions:
            named += [
                (f"gcn.bwd.hop{k}", p) for k, p in enumerate(self.backward_proj)
            ]
        return named

    def __call__(self, x: DiffArray, adj_sparse: DiffArray) -> DiffArray:
        fwd = ar.normalize_adjacency(adj_sparse)
        bwd = ar.normalize_adjacency(ar.transpose(adj_sparse))
        out = mixhop_forward(x, fwd, self.forward_proj, self.retain)
        return ar.add(out, mixhop_forward(x, bwd, self.backward_proj, self.retain))
