"""Timing comparison of the compiled and pure-Python kernel backends.

Covers both kernel families behind the STGAD_KERNELS switch: the dilated
convolutions (where numpy rides on BLAS and usually wins, which is why
"auto" keeps them on numpy) and the streaming median/IQR normalizer
(a sequential loop numpy cannot batch, where the compiled side wins by
orders of magnitude, which is why "auto" compiles it). Agreement between
backends is asserted before any timing so a broken extension fails
loudly instead of benchmarking garbage.

Usage: python3 benchmarks/bench_kernels.py [--repeats 30]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from stgad.engine import kernels_numpy

try:
    from stgad.engine import _convcore
except ImportError:
    _convcore = None


CASES = [
    # batch, cin, cout, nodes, time, width, dilation
    ("layer1 width7", 64, 16, 16, 8, 13, 7, 1),
    ("layer1 width2", 64, 16, 16, 8, 13, 2, 1),
    ("layer2 width7", 64, 16, 16, 8, 7, 7, 1),
    ("wide batch", 256, 16, 16, 8, 13, 6, 1),
    ("many nodes", 64, 16, 16, 40, 13, 7, 1),
]


def _time(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run_case(name, batch, cin, cout, nodes, t_in, width, dilation, repeats):
    rng = np.random.default_rng(0)
    x = rng.normal(size=(batch, cin, nodes, t_in))
    kernel = rng.normal(size=(cout, cin, width))
    t_out = kernels_numpy.out_length(t_in, width, dilation)
    grad_out = rng.normal(size=(batch, cout, nodes, t_out))

    ops = {
        "forward": (
            lambda m: m.conv1d_forward(x, kernel, dilation),
        ),
        "grad_input": (
            lambda m: m.conv1d_backward_input(grad_out, kernel, dilation, t_in),
        ),
        "grad_kernel": (
            lambda m: np.asarray(m.conv1d_backward_kernel(grad_out, x, width, dilation)),
        ),
    }
    rows = []
    for op_name, (call,) in ops.items():
        ref = call(kernels_numpy)
        got = call(_convcore)
        err = float(np.max(np.abs(ref - got)))
        if err > 1e-10:
            raise AssertionError(f"{name}/{op_name}: backends disagree by {err:g}")
        t_np = _time(lambda: call(kernels_numpy), repeats)
        t_c = _time(lambda: call(_convcore), repeats)
        rows.append((op_name, t_np, t_c))
    return rows


def bench_normalizer(rows: int, channels: int, window: int, repeats: int):
    from stgad.scoring import ErrorNormalizer

    rng = np.random.default_rng(1)
    block = rng.normal(size=(rows, channels)) ** 2

    def python_pass():
        nm = ErrorNormalizer(channels, window)
        out = np.empty_like(block)
        for i, row in enumerate(block):
            out[i] = nm.push(row)
        return out

    def compiled_pass():
        nm = ErrorNormalizer(channels, window)
        res = _convcore.normalizer_block(
            nm._ring, nm._sorted, nm._next, nm.count, block, nm.epsilon, True
        )
        return res[0]

    err = float(np.max(np.abs(python_pass() - compiled_pass())))
    if err > 0.0:
        raise AssertionError(f"normalizer backends disagree by {err:g}")
    reps = max(1, repeats // 10)  # the python pass is slow; keep this bounded
    return _time(python_pass, reps), _time(compiled_pass, repeats)


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=30)
    args = ap.parse_args()
    if _convcore is None:
        print("compiled extension not built; nothing to compare")
        return 1
    print(f"{'case':<16} {'op':<12} {'python ms':>9} {'compiled ms':>12} {'speedup':>8}")
    for case in CASES:
        name = case[0]
        for op_name, t_np, t_c in run_case(*case, repeats=args.repeats):
            print(
                f"{name:<16} {op_name:<12} {t_np * 1e3:>9.3f} "
                f"{t_c * 1e3:>12.3f} {t_np / t_c:>8.2f}x"
            )
    for rows, channels, window in ((2000, 8, 1000), (5000, 8, 5000), (5000, 40, 2000)):
        name = f"norm {rows}x{channels}"
        t_py, t_c = bench_normalizer(rows, channels, window, args.repeats)
        print(
            f"{name:<16} {'w=' + str(window):<12} {t_py * 1e3:>9.3f} "
            f"{t_c * 1e3:>12.3f} {t_py / t_c:>8.2f}x"
        )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
