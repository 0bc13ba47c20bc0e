"""Adam optimizer.

The update divides the bias-corrected first moment by sqrt(v_hat) + eps,
i.e. the damping term sits outside the square root, so the very first
step moves each weight by about -lr * g / (|g| + eps).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import ContractError, NumericError
from .array import DiffArray


@dataclass
class AdamState:
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def init_adam_state(values: Sequence[np.ndarray]) -> AdamState:
    return AdamState(
        step=0,
        m=[np.zeros_like(x) for x in values],
        v=[np.zeros_like(x) for x in values],
    )


def adam_step(
    values: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    state: AdamState,
    lr: float = 3e-4,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> list:
    """One Adam update. Returns new values; moments update in place.

    Any non-finite gradient rejects the whole step so a single bad batch
    cannot poison the moment buffers.
    """
    if len(values) != len(grads) or len(values) != len(state.m):
        raise ContractError("adam_step: mismatched parameter, gradient and state lengths")
    for i, g in enumerate(grads):
        if g is None:
            raise ContractError(f"adam_step: missing gradient for parameter {i}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {i}; step rejected")
    state.step += 1
    b1, b2 = betas
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    out = []
    for x, g, m, v in zip(values, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / c1
        v_hat = v / c2
        out.append(x - lr * m_hat / (np.sqrt(v_hat) + eps))
    return out


class Adam:
    """Convenience wrapper binding the functional update to DiffArray leaves."""

    def __init__(
        self,
        params: Sequence[DiffArray],
        lr: float = 3e-4,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
    ):
        self.params = list(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.state = init_adam_state([p.values for p in self.params])

    def step(self) -> None:
        grads = [p.grad for p in self.params]
        new_values = adam_step(
            [p.values for p in self.params], grads, self.state,
            lr=self.lr, betas=self.betas, eps=self.eps,
        )
        for p, x in zip(self.params, new_values):
            p.values = x.astype(p.values.dtype, copy=False)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None
