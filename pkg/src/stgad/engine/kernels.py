"""Backend selection for the compiled hot kernels.

Two kernel families live behind this switch. The dilated convolutions
have a numpy implementation that rides on BLAS and a hand-written
compiled one; measurement (benchmarks/bench_kernels.py) shows numpy
ahead at model shapes, so "auto" keeps convolutions on numpy. The
streaming error normalizer is a sequential per-row loop that numpy
cannot batch, where the compiled side wins by a wide margin, so "auto"
runs it compiled whenever the extension is importable.

Set STGAD_KERNELS to "numpy" or "compiled" to force one side for
everything; forcing "compiled" without the extension built is a hard
error rather than a silent fallback.
"""

from __future__ import annotations

import os

from ..errors import ContractError
from . import kernels_numpy

try:
    from . import _convcore
except ImportError:  # extension not built on this install
    _convcore = None

_choice = os.environ.get("STGAD_KERNELS", "auto").strip().lower()
if _choice not in ("auto", "numpy", "compiled"):
    raise ContractError(f"STGAD_KERNELS must be auto, numpy or compiled, got {_choice!r}")
if _choice == "compiled" and _convcore is None:
    raise ContractError("STGAD_KERNELS=compiled but the extension is not built")

_conv_compiled = _convcore is not None and _choice == "compiled"
_norm_compiled = _convcore is not None and _choice != "numpy"


def backend_name() -> str:
    """The active side for the normalizer kernel (the extension's hot path)."""
    return "compiled" if _norm_compiled else "numpy"


out_length = kernels_numpy.out_length


def conv1d_forward(x, kernel, dilation):
    out_length(x.shape[3], kernel.shape[2], dilation)
    if _conv_compiled:
        return _convcore.conv1d_forward(x, kernel, dilation)
    return kernels_numpy.conv1d_forward(x, kernel, dilation)


def conv1d_backward_kernel(grad_out, x, width, dilation):
    if _conv_compiled:
        return _convcore.conv1d_backward_kernel(grad_out, x, width, dilation)
    return kernels_numpy.conv1d_backward_kernel(grad_out, x, width, dilation)


def conv1d_backward_input(grad_out, kernel, dilation, t_in):
    if _conv_compiled:
        return _convcore.conv1d_backward_input(grad_out, kernel, dilation, t_in)
    return kernels_numpy.conv1d_backward_input(grad_out, kernel, dilation, t_in)


def normalizer_block(ring, sorted_buf, next_slot, count, block, eps, emit):
    """Compiled streaming-normalizer pass, or None when unavailable.

    Callers fall back to their own sequential path on None; the state
    arrays are shared with the caller and updated in place otherwise.
    """
    if not _norm_compiled:
        return None
    return _convcore.normalizer_block(ring, sorted_buf, next_slot, count, block, eps, emit)
