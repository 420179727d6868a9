"""Hot integer kernels with two interchangeable backends.

The compiled backend wraps the scalar-loop kernels in numba @njit; the
fallback backend is vectorized numpy. Selection happens once at import:

    TCUFLOW_BACKEND=numba   force the jit backend (error if numba is missing)
    TCUFLOW_BACKEND=numpy   force the fallback
    unset                   numba when importable, numpy otherwise

Both backends perform the same per-lane operation sequence, so results are
bit-identical even when saturation fires mid-accumulation. The env var is a
performance toggle only; see benchmarks/bench_kernels.py for the comparison.
"""

from __future__ import annotations

import os

import numpy as np

_env = os.environ.get("TCUFLOW_BACKEND", "").strip().lower()
if _env not in ("", "numba", "numpy"):
    raise ValueError(f"TCUFLOW_BACKEND must be 'numba' or 'numpy', got {_env!r}")

if _env == "numpy":
    _HAS_NUMBA = False
else:
    try:
        from numba import njit

        _HAS_NUMBA = True
    except ImportError:
        if _env == "numba":
            raise
        _HAS_NUMBA = False

BACKEND = "numba" if _HAS_NUMBA else "numpy"


def _matmul_stream_loops(tile, local, in_base, acc, acc_base, rows, accumulate,
                         acc_lo, acc_hi):
    """Stream `rows` vectors from local through the weight tile into acc.

    acc[acc_base + r, j] (+)= sum_k tile[k, j] * local[in_base + r, k],
    saturating at [acc_lo, acc_hi] after every multiply-accumulate step.
    """
    n = tile.shape[0]
    for r in range(rows):
        for j in range(n):
            if accumulate:
                s = acc[acc_base + r, j]
            else:
                s = np.int64(0)
            for k in range(n):
                s = s + tile[k, j] * local[in_base + r, k]
                if s > acc_hi:
                    s = acc_hi
                elif s < acc_lo:
                    s = acc_lo
            acc[acc_base + r, j] = s


def _matmul_stream_numpy(tile, local, in_base, acc, acc_base, rows, accumulate,
                         acc_lo, acc_hi):
    n = tile.shape[0]
    block = acc[acc_base:acc_base + rows]
    out = block.copy() if accumulate else np.zeros((rows, n), dtype=np.int64)
    x = local[in_base:in_base + rows]
    # k ascending with a clamp per step, same per-lane order as the jit path
    for k in range(n):
        out += x[:, k:k + 1] * tile[k]
        np.clip(out, acc_lo, acc_hi, out=out)
    block[:] = out


def _qgemm_loops(x, w, bias, frac, acc_lo, acc_hi, out_lo, out_hi):
    """Quantized GEMM with bias fold and rescale: the layer-level reference.

    x is (M, K) raw activations, w is (K, N) raw weights, bias is (N,) raw.
    Accumulation saturates at the accumulator bounds after each step; bias
    enters pre-shifted by frac bits; the result is shifted back with
    round-half-to-even and saturated to the storage bounds.
    """
    m_count, k_count = x.shape
    n_count = w.shape[1]
    out = np.empty((m_count, n_count), dtype=np.int64)
    half = np.int64(1) << (frac - 1)
    mask = (np.int64(1) << frac) - 1
    for m in range(m_count):
        for n in range(n_count):
            s = np.int64(0)
            for k in range(k_count):
                s = s + x[m, k] * w[k, n]
                if s > acc_hi:
                    s = acc_hi
                elif s < acc_lo:
                    s = acc_lo
            s = s + (bias[n] << frac)
            if s > acc_hi:
                s = acc_hi
            elif s < acc_lo:
                s = acc_lo
            q = s >> frac
            r = s & mask
            if r > half or (r == half and (q & 1) == 1):
                q += 1
            if q > out_hi:
                q = out_hi
            elif q < out_lo:
                q = out_lo
            out[m, n] = q
    return out


def _qgemm_numpy(x, w, bias, frac, acc_lo, acc_hi, out_lo, out_hi):
    m_count = x.shape[0]
    n_count = w.shape[1]
    s = np.zeros((m_count, n_count), dtype=np.int64)
    for k in range(x.shape[1]):
        s += x[:, k:k + 1] * w[k]
        np.clip(s, acc_lo, acc_hi, out=s)
    s += bias << frac
    np.clip(s, acc_lo, acc_hi, out=s)
    half = np.int64(1) << (frac - 1)
    q = s >> frac
    r = s & ((np.int64(1) << frac) - 1)
    q += (r > half) | ((r == half) & ((q & 1) == 1))
    np.clip(q, out_lo, out_hi, out=q)
    return q


if BACKEND == "numba":
    matmul_stream = njit(cache=True)(_matmul_stream_loops)
    qgemm = njit(cache=True)(_qgemm_loops)
else:
    matmul_stream = _matmul_stream_numpy
    qgemm = _qgemm_numpy
