#!/usr/bin/env python3
"""Benchmark the jit kernels against the pure-numpy fallback.

Wraps the same scalar-loop sources the package jits at import, times both
implementations on growing GEMM shapes, and checks the results agree to the
bit. Run the whole toolchain under either backend with:

    TCUFLOW_BACKEND=numpy python3 ...   # force the fallback
    TCUFLOW_BACKEND=numba python3 ...   # require the jit path
"""

import os
import sys
import time

import numpy as np

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, os.path.join(ROOT, "src"))

from tcuflow.kernels import (_matmul_stream_loops, _matmul_stream_numpy,
                             _qgemm_loops, _qgemm_numpy)  # noqa: E402
from tcuflow.quant import DEFAULT_FORMAT  # noqa: E402

try:
    from numba import njit
    HAS_NUMBA = True
    matmul_jit = njit(cache=True)(_matmul_stream_loops)
    qgemm_jit = njit(cache=True)(_qgemm_loops)
except ImportError:
    HAS_NUMBA = False
    print("numba not installed; timing the numpy fallback only")


def timeit(fn, *args, repeat=5):
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def bench_matmul_stream(rng, a, rows):
    fmt = DEFAULT_FORMAT
    tile = rng.integers(fmt.raw_min, fmt.raw_max, (a, a), dtype=np.int64)
    local = rng.integers(fmt.raw_min, fmt.raw_max, (rows, a), dtype=np.int64)
    acc_np = np.zeros((rows, a), dtype=np.int64)
    args = (tile, local, 0, acc_np, 0, rows, False, fmt.acc_min, fmt.acc_max)
    t_np = timeit(_matmul_stream_numpy, *args)
    line = f"matmul_stream rows={rows:<6} a={a}  numpy {t_np * 1e3:8.2f} ms"
    if HAS_NUMBA:
        acc_jit = np.zeros((rows, a), dtype=np.int64)
        jit_args = (tile, local, 0, acc_jit, 0, rows, False,
                    fmt.acc_min, fmt.acc_max)
        matmul_jit(*jit_args)  # warmup/compile
        acc_jit[:] = 0
        t_jit = timeit(matmul_jit, *jit_args)
        match = np.array_equal(acc_np, acc_jit)
        line += (f"  numba {t_jit * 1e3:8.2f} ms  "
                 f"speedup {t_np / max(t_jit, 1e-12):6.1f}x  "
                 f"bit-equal={match}")
        if not match:
            raise SystemExit("backend mismatch in matmul_stream")
    print(line)


def bench_qgemm(rng, m, k, n):
    fmt = DEFAULT_FORMAT
    x = rng.integers(fmt.raw_min, fmt.raw_max, (m, k), dtype=np.int64)
    w = rng.integers(fmt.raw_min, fmt.raw_max, (k, n), dtype=np.int64)
    b = rng.integers(fmt.raw_min, fmt.raw_max, n, dtype=np.int64)
    args = (x, w, b, fmt.frac_bits, fmt.acc_min, fmt.acc_max,
            fmt.raw_min, fmt.raw_max)
    out_np = _qgemm_numpy(*args)
    t_np = timeit(_qgemm_numpy, *args)
    line = f"qgemm {m}x{k}x{n:<5}          numpy {t_np * 1e3:8.2f} ms"
    if HAS_NUMBA:
        out_jit = qgemm_jit(*args)  # warmup/compile
        t_jit = timeit(qgemm_jit, *args)
        match = np.array_equal(out_np, out_jit)
        line += (f"  numba {t_jit * 1e3:8.2f} ms  "
                 f"speedup {t_np / max(t_jit, 1e-12):6.1f}x  "
                 f"bit-equal={match}")
        if not match:
            raise SystemExit("backend mismatch in qgemm")
    print(line)


def main():
    rng = np.random.default_rng(42)
    print(f"numba available: {HAS_NUMBA}")
    for rows in (64, 512, 4096):
        bench_matmul_stream(rng, 8, rows)
    for m, k, n in ((1, 187, 64), (64, 360, 64), (256, 512, 64)):
        bench_qgemm(rng, m, k, n)


if __name__ == "__main__":
    main()
