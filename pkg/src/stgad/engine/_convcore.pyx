# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: dilated convolutions and the streaming normalizer.

Semantics match the pure-Python sides exactly (same results up to float
rounding from summation order in the convolutions; bit-identical for the
normalizer, which performs the very same insertions and interpolations).
Parallel regions run only over axes whose writes are disjoint (batch,
out-channel, or channel), with a static schedule and no cross-thread
reductions, so each backend is bitwise deterministic for any thread count.
"""

import numpy as np

cimport numpy as cnp
from cython.parallel cimport prange

cnp.import_array()

ctypedef fused real:
    float
    double


def conv1d_forward(real[:, :, :, ::1] x, real[:, :, ::1] kernel, Py_ssize_t dilation):
    cdef Py_ssize_t b = x.shape[0], ci = x.shape[1], n = x.shape[2], t = x.shape[3]
    cdef Py_ssize_t co = kernel.shape[0], width = kernel.shape[2]
    cdef Py_ssize_t t_out = t - dilation * (width - 1)
    if real is double:
        out_arr = np.empty((b, co, n, t_out), dtype=np.float64)
    else:
        out_arr = np.empty((b, co, n, t_out), dtype=np.float32)
    cdef real[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t ib, io, ic, jn, it, iw
    cdef real acc
    for ib in prange(b, nogil=True, schedule='static'):
        for io in range(co):
            for jn in range(n):
                for it in range(t_out):
                    acc = 0
                    for ic in range(ci):
                        for iw in range(width):
                            acc = acc + x[ib, ic, jn, it + dilation * iw] * kernel[io, ic, iw]
                    out[ib, io, jn, it] = acc
    return out_arr


def conv1d_backward_kernel(real[:, :, :, ::1] grad_out, real[:, :, :, ::1] x,
                           Py_ssize_t width, Py_ssize_t dilation):
    cdef Py_ssize_t b = x.shape[0], ci = x.shape[1], n = x.shape[2]
    cdef Py_ssize_t co = grad_out.shape[1], t_out = grad_out.shape[3]
    if real is double:
        gk_arr = np.zeros((co, ci, width), dtype=np.float64)
    else:
        gk_arr = np.zeros((co, ci, width), dtype=np.float32)
    cdef real[:, :, ::1] gk = gk_arr
    cdef Py_ssize_t ib, io, ic, jn, it, iw
    cdef real acc
    for io in prange(co, nogil=True, schedule='static'):
        for ic in range(ci):
            for iw in range(width):
                acc = 0
                for ib in range(b):
                    for jn in range(n):
                        for it in range(t_out):
                            acc = acc + grad_out[ib, io, jn, it] * x[ib, ic, jn, it + dilation * iw]
                gk[io, ic, iw] = acc
    return gk_arr


def conv1d_backward_input(real[:, :, :, ::1] grad_out, real[:, :, ::1] kernel,
                          Py_ssize_t dilation, Py_ssize_t t_in):
    cdef Py_ssize_t b = grad_out.shape[0], co = grad_out.shape[1]
    cdef Py_ssize_t n = grad_out.shape[2], t_out = grad_out.shape[3]
    cdef Py_ssize_t ci = kernel.shape[1], width = kernel.shape[2]
    if real is double:
        gx_arr = np.zeros((b, ci, n, t_in), dtype=np.float64)
    else:
        gx_arr = np.zeros((b, ci, n, t_in), dtype=np.float32)
    cdef real[:, :, :, ::1] gx = gx_arr
    cdef Py_ssize_t ib, io, ic, jn
    cdef Py_ssize_t s, w, wlo, whi, num
    cdef real acc
    for ib in prange(b, nogil=True, schedule='static'):
        for ic in range(ci):
            for jn in range(n):
                for s in range(t_in):
                    num = s - t_out + 1
                    if num <= 0:
                        wlo = 0
                    else:
                        wlo = (num + dilation - 1) // dilation
                    whi = s // dilation
                    if whi > width - 1:
                        whi = width - 1
                    acc = 0
                    for w in range(wlo, whi + 1):
                        for io in range(co):
                            acc = acc + grad_out[ib, io, jn, s - dilation * w] * kernel[io, ic, w]
                    gx[ib, ic, jn, s] = acc
    return gx_arr


def normalizer_block(double[:, ::1] ring, double[:, ::1] sorted_buf,
                     Py_ssize_t next_slot, Py_ssize_t count,
                     double[:, ::1] block, double eps, bint emit):
    """Run a block of error rows through the streaming normalizer state.

    ring and sorted_buf are the per-channel [N, W] buffers of the Python
    normalizer and are updated in place; next_slot and count describe the
    shared ring position and fill level. Returns (out, next_slot, count)
    where out is the [T, N] normalized block, or None when emit is false
    (preload mode). Every channel replays the same slot/count trajectory,
    so channels parallelize with disjoint writes.
    """
    cdef Py_ssize_t n = ring.shape[0], w = ring.shape[1], t = block.shape[0]
    cdef double[:, ::1] out = None
    out_arr = None
    if emit:
        out_arr = np.empty((t, n), dtype=np.float64)
        out = out_arr
    cdef Py_ssize_t it, c, cnt, slot, pos, lo, hi, j
    cdef double v, old, h, frac, q25, q50, q75
    for c in prange(n, nogil=True, schedule='static'):
        cnt = count
        slot = next_slot
        for it in range(t):
            v = block[it, c]
            if cnt == w:
                # evict the oldest arrival from the sorted row
                old = ring[c, slot]
                lo = 0
                hi = cnt
                while lo < hi:
                    pos = (lo + hi) // 2
                    if sorted_buf[c, pos] < old:
                        lo = pos + 1
                    else:
                        hi = pos
                for j in range(lo, cnt - 1):
                    sorted_buf[c, j] = sorted_buf[c, j + 1]
                cnt = cnt - 1
            # insert v keeping the row ascending (first position >= v)
            lo = 0
            hi = cnt
            while lo < hi:
                pos = (lo + hi) // 2
                if sorted_buf[c, pos] < v:
                    lo = pos + 1
                else:
                    hi = pos
            for j in range(cnt, lo, -1):
                sorted_buf[c, j] = sorted_buf[c, j - 1]
            sorted_buf[c, lo] = v
            ring[c, slot] = v
            slot = (slot + 1) % w
            cnt = cnt + 1
            if cnt > w:
                cnt = w
            if emit:
                h = (cnt - 1) * 0.25
                j = <Py_ssize_t> h
                frac = h - j
                q25 = sorted_buf[c, j]
                if j + 1 < cnt:
                    q25 = q25 * (1.0 - frac) + sorted_buf[c, j + 1] * frac
                h = (cnt - 1) * 0.5
                j = <Py_ssize_t> h
                frac = h - j
                q50 = sorted_buf[c, j]
                if j + 1 < cnt:
                    q50 = q50 * (1.0 - frac) + sorted_buf[c, j + 1] * frac
                h = (cnt - 1) * 0.75
                j = <Py_ssize_t> h
                frac = h - j
                q75 = sorted_buf[c, j]
                if j + 1 < cnt:
                    q75 = q75 * (1.0 - frac) + sorted_buf[c, j + 1] * frac
                out[it, c] = (v - q50) / ((q75 - q25) + eps)
    next_slot = (next_slot + t) % w
    count = count + t
    if count > w:
        count = w
    return out_arr, next_slot, count
