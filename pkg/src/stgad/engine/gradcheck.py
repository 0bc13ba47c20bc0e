"""Finite-difference verification of the recorded gradients.

Used by the test suite as the independent oracle for every op and for
whole models: central differences with step h on float64 values, compared
elementwise against what backward() recorded.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .array import DiffArray, backward, zero_grad


def numerical_gradient(
    loss_fn: Callable[[], DiffArray], param: DiffArray, h: float = 1e-5
) -> np.ndarray:
    """Central-difference d loss / d param, one element at a time."""
    base = param.values
    grad = np.zeros_like(base)
    flat = base.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = float(loss_fn().values)
        flat[i] = orig - h
        down = float(loss_fn().values)
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * h)
    return grad


def max_relative_error(
    loss_fn: Callable[[], DiffArray],
    params: Sequence[DiffArray],
    h: float = 1e-5,
    scale_floor: float = 1e-6,
) -> float:
    """Worst elementwise relative error across all params.

    The denominator is floored at scale_floor so exact-zero gradients
    compare on an absolute scale instead of dividing by zero.
    """
    zero_grad(params)
    backward(loss_fn())
    worst = 0.0
    for p in params:
        analytic = p.grad if p.grad is not None else np.zeros_like(p.values)
        numeric = numerical_gradient(loss_fn, p, h=h)
        denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), scale_floor)
        err = float(np.max(np.abs(analytic - numeric) / denom))
        worst = max(worst, err)
    return worst
