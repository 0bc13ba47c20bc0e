"""Differentiable array engine: tape autodiff, conv kernels, Adam."""

from .array import (
    DiffArray,
    add,
    backward,
    bias_add,
    channel_mix,
    concat_channels,
    constant,
    conv1d_dilated,
    div,
    elementwise,
    matmul,
    mean_all,
    mul,
    node_mix,
    normalize_adjacency,
    parameter,
    relu,
    sigmoid,
    slice_time_tail,
    sub,
    sum_all,
    tanh,
    transpose,
    zero_grad,
)
from .gradcheck import max_relative_error, numerical_gradient
from .kernels import backend_name
from .optim import Adam, AdamState, adam_step, init_adam_state

__all__ = [
    "DiffArray",
    "add",
    "backward",
    "bias_add",
    "channel_mix",
    "concat_channels",
    "constant",
    "conv1d_dilated",
    "div",
    "elementwise",
    "matmul",
    "mean_all",
    "mul",
    "node_mix",
    "normalize_adjacency",
    "parameter",
    "relu",
    "sigmoid",
    "slice_time_tail",
    "sub",
    "sum_all",
    "tanh",
    "transpose",
    "zero_grad",
    "backend_name",
    "max_relative_error",
    "numerical_gradient",
    "Adam",
    "AdamState",
    "adam_step",
    "init_adam_state",
]
