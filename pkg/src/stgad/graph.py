"""Learned directed dependency graph over channels.

Two embedding banks are pushed through weight matrices and a saturating
tanh, and their cross products are differenced so the resulting adjacency
is uni-directional by construction: relu(tanh(alpha * (M - M^T))) can
keep at most one of (i, j) and (j, i) positive, the diagonal is exactly
zero, and every entry lies in [0, 1) mathematically (floating point may
saturate the tanh to 1.0 exactly). A per-row top-k mask sparsifies the
matrix; the mask itself is recomputed every forward pass and treated as a
constant by differentiation (gradients flow only through kept entries).
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .engine import array as ar
from .engine.array import DiffArray
from .errors import ContractError, DimensionError


def sparsify_topk(values: np.ndarray, k: int) -> np.ndarray:
    """Per-row top-k binary mask. Ties break toward the lowest column index."""
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        raise DimensionError("sparsify_topk expects a square matrix")
    if k < 1:
        raise ContractError(f"neighbor budget k must be >= 1, got {k}")
    n = values.shape[1]
    k = min(k, n)
    # Stable argsort on the negated row keeps earlier columns first among
    # equal values, which is exactly the documented tie rule.
    order = np.argsort(-values, axis=1, kind="stable")
    mask = np.zeros_like(values, dtype=np.float64)
    rows = np.repeat(np.arange(values.shape[0]), k)
    cols = order[:, :k].reshape(-1)
    mask[rows, cols] = 1.0
    return mask


class LearnedGraph:
    """Container for the graph parameters plus adjacency construction."""

    def __init__(
        self,
        n_channels: int,
        embed_dim: int = 256,
        alpha: float = 20.0,
        topk: int = 15,
        rng: Optional[np.random.Generator] = None,
        dtype=np.float64,
    ):
        if n_channels < 2:
            raise ContractError("graph learning needs at least two channels")
        if rng is None:
            rng = np.random.default_rng(0)
        self.n_channels = n_channels
        self.embed_dim = embed_dim
        self.alpha = float(alpha)
        self.topk = int(topk)
        std = 1.0 / np.sqrt(embed_dim)
        shape_e = (n_channels, embed_dim)
        shape_w = (embed_dim, embed_dim)
        self.source_embed = ar.parameter(rng.normal(0.0, std, shape_e).astype(dtype))
        self.target_embed = ar.parameter(rng.normal(0.0, std, shape_e).astype(dtype))
        self.source_weight = ar.parameter(rng.normal(0.0, std, shape_w).astype(dtype))
        self.target_weight = ar.parameter(rng.normal(0.0, std, shape_w).astype(dtype))

    def parameters(self):
        return [
            ("graph.source_embed", self.source_embed),
            ("graph.target_embed", self.target_embed),
            ("graph.source_weight", self.source_weight),
            ("graph.target_weight", self.target_weight),
        ]

    def build_adjacency(self) -> DiffArray:
        """Dense adjacency: relu(tanh(alpha * (M1 M2^T - M2 M1^T)))."""
        m1 = ar.tanh(ar.matmul(self.source_embed, self.source_weight) * self.alpha)
        m2 = ar.tanh(ar.matmul(self.target_embed, self.target_weight) * self.alpha)
        cross = ar.matmul(m1, ar.transpose(m2))
        # M1 M2^T - M2 M1^T is antisymmetric, so the two differenced terms
        # are transposes of each other; one matmul covers both.
        skew = ar.sub(cross, ar.transpose(cross))
        return ar.relu(ar.tanh(skew * self.alpha))

    def adjacency_sparse(self) -> DiffArray:
        """Dense adjacency with the per-row top-k mask applied."""
        dense = self.build_adjacency()
        mask = sparsify_topk(dense.values, self.topk)
        return ar.mul(dense, ar.constant(mask.astype(dense.values.dtype)))


def neighborhoods(adjacency: np.ndarray) -> list:
    """Per-node union of in- and out-neighbors, self included."""
    if adjacency.ndim != 2 or adjacency.shape[0] != adjacency.shape[1]:
        raise DimensionError("neighborhoods expects a square matrix")
    n = adjacency.shape[0]
    out = []
    for i in range(n):
        mask = (adjacency[i, :] > 0) | (adjacency[:, i] > 0)
        mask[i] = True
        out.append(np.flatnonzero(mask))
    return out


def export_edges(adjacency: np.ndarray, channel_names: Sequence[str], path) -> int:
    """Write the non-zero directed edges as 'src,dst,weight' CSV rows.

    Row i / column j is the edge i -> j. Returns the edge count.
    """
    if adjacency.shape != (len(channel_names), len(channel_names)):
        raise DimensionError("adjacency size does not match channel names")
    path = Path(path)
    count = 0
    with open(path, "w") as fh:
        fh.write("src,dst,weight\n")
        for i in range(adjacency.shape[0]):
            for j in range(adjacency.shape[1]):
                w = adjacency[i, j]
                if w > 0:
                    fh.write(f"{channel_names[i]},{channel_names[j]},{repr(float(w))}\n")
                    count += 1
    return count
