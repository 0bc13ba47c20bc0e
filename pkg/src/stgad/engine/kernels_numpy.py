"""Pure-numpy implementations of the dilated convolution kernels.

These mirror the compiled routines in ``_convcore`` exactly; the engine
picks one backend at import time (see ``kernels``). Layout convention for
all three routines: inputs are [batch, channel, node, time], kernels are
[out_channel, in_channel, width], and the convolution is "valid" (no
padding) with the kernel reaching *backwards* in time, so an output at
time t combines inputs at t, t+d, ..., t+d*(width-1) where d is the
dilation. Output length is T - d*(width-1).
"""

from __future__ import annotations

import numpy as np

from ..errors import DimensionError


def out_length(t_in: int, width: int, dilation: int) -> int:
    t_out = t_in - dilation * (width - 1)
    if t_out < 1:
        raise DimensionError(
            f"conv input length {t_in} too short for width {width} "
            f"at dilation {dilation}"
        )
    return t_out


def _windows(x: np.ndarray, width: int, dilation: int) -> np.ndarray:
    """Strided read-only view [B, C, N, T_out, width] of sliding windows."""
    b, c, n, t = x.shape
    t_out = out_length(t, width, dilation)
    sb, sc, sn, st = x.strides
    return np.lib.stride_tricks.as_strided(
        x,
        shape=(b, c, n, t_out, width),
        strides=(sb, sc, sn, st, st * dilation),
        writeable=False,
    )


def conv1d_forward(x: np.ndarray, kernel: np.ndarray, dilation: int) -> np.ndarray:
    """Dilated valid convolution. x [B,Ci,N,T], kernel [Co,Ci,W] -> [B,Co,N,T_out]."""
    win = _windows(x, kernel.shape[2], dilation)
    # [B,N,T_out,Co] <- contract over in_channel and tap position
    out = np.tensordot(win, kernel, axes=([1, 4], [1, 2]))
    return np.ascontiguousarray(np.moveaxis(out, 3, 1))


def conv1d_backward_kernel(
    grad_out: np.ndarray, x: np.ndarray, width: int, dilation: int
) -> np.ndarray:
    """Gradient w.r.t. the kernel. grad_out [B,Co,N,T_out] -> [Co,Ci,W]."""
    win = _windows(x, width, dilation)
    return np.tensordot(grad_out, win, axes=([0, 2, 3], [0, 2, 3]))


def conv1d_backward_input(
    grad_out: np.ndarray, kernel: np.ndarray, dilation: int, t_in: int
) -> np.ndarray:
    """Gradient w.r.t. the input. grad_out [B,Co,N,T_out] -> [B,Ci,N,T_in]."""
    b, co, n, t_out = grad_out.shape
    width = kernel.shape[2]
    if t_in != t_out + dilation * (width - 1):
        raise DimensionError(
            f"grad length {t_out} inconsistent with input length {t_in}"
        )
    pad = dilation * (width - 1)
    padded = np.zeros((b, co, n, t_out + 2 * pad), dtype=grad_out.dtype)
    padded[..., pad : pad + t_out] = grad_out
    win = _windows(padded, width, dilation)  # [B,Co,N,T_in,W]
    flipped = kernel[:, :, ::-1]
    gx = np.tensordot(win, flipped, axes=([1, 4], [0, 2]))  # [B,N,T_in,Ci]
    return np.ascontiguousarray(np.moveaxis(gx, 3, 1))
