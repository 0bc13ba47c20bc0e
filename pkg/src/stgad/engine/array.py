"""Reverse-mode automatic differentiation over numpy arrays.

Every operation builds a node holding its output values, the parent
nodes it was computed from, and a closure that pushes the output
gradient back to those parents. Calling :func:`backward` on a scalar
result walks the recorded nodes in reverse creation order (creation
order is already topological) and accumulates gradients into the
``grad`` buffer of every reachable leaf with ``requires_grad``.

Rules the ops enforce:

* binary elementwise ops require exactly equal shapes; the only
  broadcasting allowed anywhere is a Python scalar against an array
* an array is treated as immutable once an op has produced it
* each ``backward`` call adds one unit of gradient; grads accumulate
  across calls until :func:`zero_grad` resets them
* ``relu`` propagates zero gradient at exactly zero
"""

from __future__ import annotations

import itertools
from typing import Callable, Optional, Sequence

import numpy as np

from ..errors import ContractError, DimensionError
from . import kernels

_tape_counter = itertools.count()

# Gradient flow of the backward pass currently in progress, keyed by node
# id. Module-level is fine: differentiation is single-threaded by contract.
_flow: Optional[dict] = None


class DiffArray:
    """A dense float array that can participate in differentiation."""

    __slots__ = ("values", "grad", "requires_grad", "tape_id", "_parents", "_push")

    def __init__(self, values, requires_grad: bool = False):
        arr = np.asarray(values)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        self.values = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.tape_id = next(_tape_counter)
        self._parents: tuple[DiffArray, ...] = ()
        self._push: Optional[Callable[[np.ndarray], None]] = None

    @property
    def shape(self):
        return self.values.shape

    @property
    def dtype(self):
        return self.values.dtype

    def __repr__(self):
        flag = ", requires_grad" if self.requires_grad else ""
        return f"DiffArray(shape={self.values.shape}{flag})"

    # Scalar-with-array is the one permitted broadcast.
    def __add__(self, other):
        if isinstance(other, DiffArray):
            return add(self, other)
        return _scalar_shift(self, float(other))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, DiffArray):
            return sub(self, other)
        return _scalar_shift(self, -float(other))

    def __rsub__(self, other):
        return _scalar_shift(_scalar_scale(self, -1.0), float(other))

    def __mul__(self, other):
        if isinstance(other, DiffArray):
            return mul(self, other)
        return _scalar_scale(self, float(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, DiffArray):
            return div(self, other)
        return _scalar_scale(self, 1.0 / float(other))

    def __neg__(self):
        return _scalar_scale(self, -1.0)


def constant(values) -> DiffArray:
    return DiffArray(values, requires_grad=False)


def parameter(values) -> DiffArray:
    return DiffArray(np.array(values, copy=True), requires_grad=True)


def _node(values: np.ndarray, parents: Sequence[DiffArray], push) -> DiffArray:
    out = DiffArray(values)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._push = push
    return out


def _accumulate(node: DiffArray, g) -> None:
    """Add a gradient contribution for ``node`` to the pass in progress."""
    if not node.requires_grad:
        return
    buf = _flow.get(id(node))
    if buf is None:
        _flow[id(node)] = np.array(g, dtype=node.values.dtype, copy=True)
    else:
        buf += g


def backward(loss: DiffArray) -> None:
    """Propagate d(loss)/d(leaf) into ``grad`` of every reachable leaf."""
    global _flow
    if loss.values.size != 1:
        raise ContractError(
            f"backward requires a scalar, got shape {loss.values.shape}"
        )
    if not loss.requires_grad:
        raise ContractError("backward on a value no parameter contributed to")
    if _flow is not None:
        raise ContractError("backward is not reentrant")
    reachable = []
    seen = set()
    stack = [loss]
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        reachable.append(node)
        stack.extend(node._parents)
    reachable.sort(key=lambda n: n.tape_id, reverse=True)
    _flow = {id(loss): np.ones(loss.values.shape, dtype=loss.values.dtype)}
    try:
        for node in reachable:
            g = _flow.pop(id(node), None)
            if g is None:
                continue
            if node._push is not None:
                node._push(g)
            else:  # leaf: record permanently
                if node.grad is None:
                    node.grad = g
                else:
                    node.grad += g
    finally:
        _flow = None


def zero_grad(params) -> None:
    for p in params:
        p.grad = None


# ---------------------------------------------------------------------------
# elementwise ops


def _check_same_shape(a: DiffArray, b: DiffArray, op: str) -> None:
    if a.values.shape != b.values.shape:
        raise DimensionError(
            f"{op}: shapes {a.values.shape} and {b.values.shape} differ; "
            "only scalar-with-array broadcasting is supported"
        )


def add(a: DiffArray, b: DiffArray) -> DiffArray:
    _check_same_shape(a, b, "add")

    def push(g):
        _accumulate(a, g)
        _accumulate(b, g)

    return _node(a.values + b.values, (a, b), push)


def sub(a: DiffArray, b: DiffArray) -> DiffArray:
    _check_same_shape(a, b, "sub")

    def push(g):
        _accumulate(a, g)
        _accumulate(b, -g)

    return _node(a.values - b.values, (a, b), push)


def mul(a: DiffArray, b: DiffArray) -> DiffArray:
    _check_same_shape(a, b, "mul")

    def push(g):
        _accumulate(a, g * b.values)
        _accumulate(b, g * a.values)

    return _node(a.values * b.values, (a, b), push)


def div(a: DiffArray, b: DiffArray) -> DiffArray:
    _check_same_shape(a, b, "div")
    out_values = a.values / b.values

    def push(g):
        _accumulate(a, g / b.values)
        _accumulate(b, -g * out_values / b.values)

    return _node(out_values, (a, b), push)


def _scalar_scale(a: DiffArray, c: float) -> DiffArray:
    def push(g):
        _accumulate(a, g * c)

    return _node(a.values * c, (a,), push)


def _scalar_shift(a: DiffArray, c: float) -> DiffArray:
    def push(g):
        _accumulate(a, g)

    return _node(a.values + c, (a,), push)


def tanh(a: DiffArray) -> DiffArray:
    out_values = np.tanh(a.values)

    def push(g):
        _accumulate(a, g * (1.0 - out_values * out_values))

    return _node(out_values, (a,), push)


def sigmoid(a: DiffArray) -> DiffArray:
    # Stable on both tails: only exponentiates non-positive arguments.
    v = a.values
    e = np.exp(-np.abs(v))
    out_values = np.where(v >= 0, 1.0 / (1.0 + e), e / (1.0 + e))

    def push(g):
        _accumulate(a, g * out_values * (1.0 - out_values))

    return _node(out_values, (a,), push)


def relu(a: DiffArray) -> DiffArray:
    mask = a.values > 0  # strict: zero input gets zero gradient

    def push(g):
        _accumulate(a, g * mask)

    return _node(np.maximum(a.values, 0), (a,), push)


_UNARY = {"tanh": tanh, "sigmoid": sigmoid, "relu": relu}
_BINARY = {"add": add, "sub": sub, "mul": mul}


def elementwise(op: str, *args: DiffArray) -> DiffArray:
    """Dispatch an elementwise op by name: tanh/sigmoid/relu/add/sub/mul."""
    if op in _UNARY:
        if len(args) != 1:
            raise ContractError(f"{op} takes one argument, got {len(args)}")
        return _UNARY[op](args[0])
    if op in _BINARY:
        if len(args) != 2:
            raise ContractError(f"{op} takes two arguments, got {len(args)}")
        return _BINARY[op](args[0], args[1])
    raise ContractError(f"unknown elementwise op {op!r}")


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: DiffArray, b: DiffArray) -> DiffArray:
    if a.values.ndim != 2 or b.values.ndim != 2:
        raise DimensionError("matmul is defined for 2-D arrays only")
    if a.values.shape[1] != b.values.shape[0]:
        raise DimensionError(
            f"matmul: inner dimensions {a.values.shape} x {b.values.shape}"
        )

    def push(g):
        _accumulate(a, g @ b.values.T)
        _accumulate(b, a.values.T @ g)

    return _node(a.values @ b.values, (a, b), push)


def transpose(a: DiffArray) -> DiffArray:
    if a.values.ndim != 2:
        raise DimensionError("transpose is defined for 2-D arrays only")

    def push(g):
        _accumulate(a, g.T)

    return _node(a.values.T.copy(), (a,), push)


# ---------------------------------------------------------------------------
# graph-structured ops over [batch, channel, node, time] blocks


def _check_block(x: DiffArray, op: str) -> None:
    if x.values.ndim != 4:
        raise DimensionError(f"{op} expects a [batch, channel, node, time] array")


def bias_add(x: DiffArray, bias: DiffArray) -> DiffArray:
    """Add a per-channel bias to a [B, C, N, T] block."""
    _check_block(x, "bias_add")
    if bias.values.shape != (x.values.shape[1],):
        raise DimensionError(
            f"bias_add: bias {bias.values.shape} vs channels {x.values.shape[1]}"
        )

    def push(g):
        _accumulate(x, g)
        _accumulate(bias, g.sum(axis=(0, 2, 3)))

    return _node(x.values + bias.values[None, :, None, None], (x, bias), push)


def channel_mix(x: DiffArray, weight: DiffArray) -> DiffArray:
    """Apply a [C_in, C_out] linear map across the channel axis of [B, C_in, N, T]."""
    _check_block(x, "channel_mix")
    if weight.values.ndim != 2 or weight.values.shape[0] != x.values.shape[1]:
        raise DimensionError(
            f"channel_mix: weight {weight.values.shape} vs channels {x.values.shape[1]}"
        )
    out_values = np.moveaxis(
        np.tensordot(x.values, weight.values, axes=([1], [0])), 3, 1
    )

    def push(g):
        _accumulate(
            x, np.moveaxis(np.tensordot(g, weight.values, axes=([1], [1])), 3, 1)
        )
        _accumulate(weight, np.tensordot(x.values, g, axes=([0, 2, 3], [0, 2, 3])))

    return _node(np.ascontiguousarray(out_values), (x, weight), push)


def node_mix(adj: DiffArray, x: DiffArray) -> DiffArray:
    """Aggregate node neighbourhoods: out[b,c,i,t] = sum_j adj[i,j] * x[b,c,j,t]."""
    _check_block(x, "node_mix")
    n = x.values.shape[2]
    if adj.values.shape != (n, n):
        raise DimensionError(f"node_mix: adjacency {adj.values.shape} vs {n} nodes")
    out_values = np.moveaxis(np.tensordot(adj.values, x.values, axes=([1], [2])), 0, 2)

    def push(g):
        _accumulate(adj, np.tensordot(g, x.values, axes=([0, 1, 3], [0, 1, 3])))
        _accumulate(
            x, np.moveaxis(np.tensordot(adj.values.T, g, axes=([1], [2])), 0, 2)
        )

    return _node(np.ascontiguousarray(out_values), (adj, x), push)


def normalize_adjacency(a: DiffArray) -> DiffArray:
    """Row-normalize (A + I) by the row sums (1 + sum_j A_ij)."""
    if a.values.ndim != 2 or a.values.shape[0] != a.values.shape[1]:
        raise DimensionError("normalize_adjacency expects a square matrix")
    n = a.values.shape[0]
    sums = 1.0 + a.values.sum(axis=1, keepdims=True)
    out_values = (a.values + np.eye(n, dtype=a.values.dtype)) / sums

    def push(g):
        # d out_ij / d a_ik = (delta_jk - out_ij) / sums_i
        row = (g * out_values).sum(axis=1, keepdims=True)
        _accumulate(a, (g - row) / sums)

    return _node(out_values, (a,), push)


def conv1d_dilated(x: DiffArray, kernel: DiffArray, dilation: int = 1) -> DiffArray:
    """Dilated valid convolution along time.

    x is [B, C_in, N, T]; kernel is [C_out, C_in, 1, W] (the singleton node
    axis keeps the per-channel filters shared across nodes). Output is
    [B, C_out, N, T - dilation*(W-1)].
    """
    _check_block(x, "conv1d_dilated")
    kv = kernel.values
    if kv.ndim != 4 or kv.shape[2] != 1:
        raise DimensionError("conv kernel must be [C_out, C_in, 1, W]")
    if kv.shape[1] != x.values.shape[1]:
        raise DimensionError(
            f"conv kernel in-channels {kv.shape[1]} vs input {x.values.shape[1]}"
        )
    if dilation < 1:
        raise DimensionError(f"dilation must be >= 1, got {dilation}")
    if x.values.dtype != kv.dtype:
        raise DimensionError("conv input and kernel dtypes differ")
    k3 = np.ascontiguousarray(kv[:, :, 0, :])
    xv = np.ascontiguousarray(x.values)
    t_in = xv.shape[3]
    width = k3.shape[2]
    kernels.out_length(t_in, width, dilation)
    out_values = kernels.conv1d_forward(xv, k3, dilation)

    def push(g):
        g = np.ascontiguousarray(g)
        _accumulate(x, kernels.conv1d_backward_input(g, k3, dilation, t_in))
        gk = kernels.conv1d_backward_kernel(g, xv, width, dilation)
        _accumulate(kernel, gk[:, :, None, :])

    return _node(out_values, (x, kernel), push)


# ---------------------------------------------------------------------------
# shape ops and reductions


def slice_time_tail(x: DiffArray, length: int) -> DiffArray:
    """Keep the trailing ``length`` steps of the time axis."""
    _check_block(x, "slice_time_tail")
    t = x.values.shape[3]
    if not 0 < length <= t:
        raise DimensionError(f"cannot keep {length} of {t} timesteps")

    def push(g):
        gx = np.zeros_like(x.values)
        gx[..., t - length :] = g
        _accumulate(x, gx)

    return _node(x.values[..., t - length :].copy(), (x,), push)


def concat_channels(arrays: Sequence[DiffArray]) -> DiffArray:
    """Concatenate [B, C, N, T] blocks along the channel axis."""
    arrays = tuple(arrays)
    if not arrays:
        raise ContractError("concat_channels needs at least one array")
    for x in arrays:
        _check_block(x, "concat_channels")
    ref = arrays[0].values.shape
    for x in arrays[1:]:
        s = x.values.shape
        if (s[0], s[2], s[3]) != (ref[0], ref[2], ref[3]):
            raise DimensionError(f"concat_channels: {s} incompatible with {ref}")
    extents = [x.values.shape[1] for x in arrays]
    offsets = np.cumsum([0] + extents)

    def push(g):
        for x, lo, hi in zip(arrays, offsets[:-1], offsets[1:]):
            _accumulate(x, g[:, lo:hi])

    return _node(
        np.concatenate([x.values for x in arrays], axis=1), arrays, push
    )


def sum_all(a: DiffArray) -> DiffArray:
    def push(g):
        _accumulate(a, np.full(a.values.shape, float(g), dtype=a.values.dtype))

    return _node(np.asarray(a.values.sum(), dtype=a.values.dtype), (a,), push)


def mean_all(a: DiffArray) -> DiffArray:
    inv = 1.0 / a.values.size

    def push(g):
        _accumulate(a, np.full(a.values.shape, float(g) * inv, dtype=a.values.dtype))

    return _node(np.asarray(a.values.mean(), dtype=a.values.dtype), (a,), push)
