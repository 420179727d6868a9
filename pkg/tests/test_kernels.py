"""Backend equivalence for the hot integer kernels.

Both backends must agree bit for bit, including when saturation fires in
the middle of an accumulation, because compiled-vs-reference equivalence
everywhere else rests on it. The scalar quant module provides a third,
independently written implementation to anchor the semantics.
"""

import importlib.util
import os
import subprocess
import sys

import numpy as np
import pytest

from tcuflow import kernels
from tcuflow.kernels import (_matmul_stream_loops, _matmul_stream_numpy,
                             _qgemm_loops, _qgemm_numpy)
from tcuflow.quant import DEFAULT_FORMAT, FixedPointFormat, mac_acc, rescale

HAVE_NUMBA = importlib.util.find_spec("numba") is not None


def _random_case(rng, n, rows, lo, hi):
    tile = rng.integers(lo, hi, (n, n)).astype(np.int64)
    local = rng.integers(lo, hi, (rows + 3, n)).astype(np.int64)
    acc = rng.integers(lo, hi, (rows + 2, n)).astype(np.int64)
    return tile, local, acc


def _run_matmul(fn, tile, local, acc, in_base, acc_base, rows, accumulate,
                acc_lo, acc_hi):
    out = acc.copy()
    fn(tile, local, in_base, out, acc_base, rows, accumulate,
       np.int64(acc_lo), np.int64(acc_hi))
    return out


def test_matmul_backends_agree():
    rng = np.random.default_rng(100)
    for _ in range(60):
        n = int(rng.integers(1, 9))
        rows = int(rng.integers(1, 12))
        tile, local, acc = _random_case(rng, n, rows, -(1 << 15), 1 << 15)
        accumulate = bool(rng.integers(0, 2))
        args = (tile, local, acc, 2, 1, rows, accumulate,
                -(1 << 47), (1 << 47) - 1)
        a = _run_matmul(_matmul_stream_loops, *args)
        b = _run_matmul(_matmul_stream_numpy, *args)
        c = _run_matmul(kernels.matmul_stream, *args)
        assert np.array_equal(a, b)
        assert np.array_equal(a, c)


def test_matmul_backends_agree_under_saturation():
    # tight accumulator bounds so the per-step clamp fires constantly
    rng = np.random.default_rng(101)
    for _ in range(60):
        n = int(rng.integers(2, 9))
        rows = int(rng.integers(1, 10))
        tile, local, acc = _random_case(rng, n, rows, -1000, 1000)
        np.clip(acc, -(1 << 20), 1 << 20, out=acc)
        args = (tile, local, acc, 0, 0, rows, True, -(1 << 20), (1 << 20) - 1)
        a = _run_matmul(_matmul_stream_loops, *args)
        b = _run_matmul(_matmul_stream_numpy, *args)
        c = _run_matmul(kernels.matmul_stream, *args)
        assert np.array_equal(a, b)
        assert np.array_equal(a, c)


def test_matmul_saturation_is_per_step_in_k_order():
    # column sums to zero, but the first term alone exceeds acc_hi; the
    # per-step clamp must leave hi - x, not 0
    x = 150_000
    hi = 100_000
    tile = np.array([[x, 0], [-x, 0]], dtype=np.int64)
    local = np.array([[1, 1]], dtype=np.int64)
    acc = np.zeros((1, 2), dtype=np.int64)
    kernels.matmul_stream(tile, local, 0, acc, 0, 1, False,
                          np.int64(-hi), np.int64(hi))
    assert acc[0, 0] == hi - x
    loops = np.zeros((1, 2), dtype=np.int64)
    _matmul_stream_loops(tile, local, 0, loops, 0, 1, False,
                         np.int64(-hi), np.int64(hi))
    assert np.array_equal(acc, loops)


def test_matmul_accumulate_adds_onto_existing():
    tile = np.eye(3, dtype=np.int64) * 2
    local = np.array([[1, 2, 3]], dtype=np.int64)
    acc = np.full((1, 3), 10, dtype=np.int64)
    kernels.matmul_stream(tile, local, 0, acc, 0, 1, True,
                          np.int64(-(1 << 40)), np.int64(1 << 40))
    assert acc.tolist() == [[12, 14, 16]]


def _oracle_qgemm(x, w, bias, fmt):
    """Scalar reference built from the quant module, loop order k ascending."""
    m_count, k_count = x.shape
    n_count = w.shape[1]
    out = np.empty((m_count, n_count), dtype=np.int64)
    for m in range(m_count):
        for n in range(n_count):
            s = 0
            for k in range(k_count):
                s = mac_acc(s, int(x[m, k]), int(w[k, n]), fmt)
            s = s + (int(bias[n]) << fmt.frac_bits)
            s = min(max(s, fmt.acc_min), fmt.acc_max)
            out[m, n] = rescale(s, fmt)
    return out


def _qgemm_args(fmt):
    return (fmt.frac_bits, np.int64(fmt.acc_min), np.int64(fmt.acc_max),
            np.int64(fmt.raw_min), np.int64(fmt.raw_max))


@pytest.mark.parametrize("fmt", [DEFAULT_FORMAT, FixedPointFormat(8, 2, 16)],
                         ids=["16/8/48", "8/2/16"])
def test_qgemm_matches_scalar_reference(fmt):
    rng = np.random.default_rng(fmt.total_bits)
    for _ in range(25):
        m = int(rng.integers(1, 5))
        k = int(rng.integers(1, 20))
        n = int(rng.integers(1, 7))
        x = rng.integers(fmt.raw_min, fmt.raw_max + 1, (m, k)).astype(np.int64)
        w = rng.integers(fmt.raw_min, fmt.raw_max + 1, (k, n)).astype(np.int64)
        bias = rng.integers(fmt.raw_min, fmt.raw_max + 1, n).astype(np.int64)
        want = _oracle_qgemm(x, w, bias, fmt)
        got = kernels.qgemm(np.ascontiguousarray(x), np.ascontiguousarray(w),
                            bias, *_qgemm_args(fmt))
        assert np.array_equal(got, want)
        assert np.array_equal(_qgemm_loops(x, w, bias, *_qgemm_args(fmt)), want)
        assert np.array_equal(_qgemm_numpy(x, w, bias, *_qgemm_args(fmt)), want)


def test_qgemm_bias_applies_after_accumulation():
    # the running sum clips at acc_max mid-loop, then cancels back into
    # storage range; folding the bias in before the loop instead would
    # shift the clip point and land on 127, not 27
    fmt = FixedPointFormat(8, 2, 16)
    x = np.array([[127, 127, 127, -127, -127]], dtype=np.int64)
    w = np.full((5, 1), 127, dtype=np.int64)
    bias = np.array([-100], dtype=np.int64)
    got = kernels.qgemm(x, w, bias, *_qgemm_args(fmt))
    assert np.array_equal(got, _oracle_qgemm(x, w, bias, fmt))
    assert got[0, 0] == 27


# -------------------------------------------------- backend selection (env)

def _backend_in_subprocess(env_value):
    env = dict(os.environ)
    if env_value is None:
        env.pop("TCUFLOW_BACKEND", None)
    else:
        env["TCUFLOW_BACKEND"] = env_value
    return subprocess.run(
        [sys.executable, "-c", "import tcuflow.kernels as k; print(k.BACKEND)"],
        capture_output=True, text=True, env=env)


def test_backend_constant_is_sane():
    assert kernels.BACKEND in ("numba", "numpy")


def test_env_forces_numpy_backend():
    proc = _backend_in_subprocess("numpy")
    assert proc.returncode == 0
    assert proc.stdout.strip() == "numpy"


@pytest.mark.skipif(not HAVE_NUMBA, reason="numba not installed")
def test_env_forces_numba_backend():
    proc = _backend_in_subprocess("numba")
    assert proc.returncode == 0
    assert proc.stdout.strip() == "numba"


def test_env_rejects_unknown_backend():
    proc = _backend_in_subprocess("cuda")
    assert proc.returncode != 0
    assert "TCUFLOW_BACKEND" in proc.stderr


def test_numpy_backend_full_pipeline_subprocess():
    # the fallback backend must drive the whole compile-and-run path
    code = (
        "import numpy as np\n"
        "from tcuflow.nnir.graph import LayerSpec, ModelGraph\n"
        "from tcuflow.nnir.qexecute import execute_quant\n"
        "from tcuflow.compiler import lower\n"
        "from tcuflow.tcusim import run\n"
        "from tcuflow.arch import DEFAULT_ARCH\n"
        "g = ModelGraph('t', (6,), [LayerSpec('d', 'Dense', ('input',),\n"
        "    {'units': 4})], 'd')\n"
        "rng = np.random.default_rng(0)\n"
        "g.weights['d'] = (rng.uniform(-1, 1, (6, 4)), rng.uniform(-1, 1, 4))\n"
        "x = rng.uniform(-1, 1, (6,))\n"
        "out, _ = run(lower(g, DEFAULT_ARCH), x)\n"
        "assert np.array_equal(out.raw, execute_quant(g, x).raw)\n"
        "print('ok')\n")
    env = dict(os.environ, TCUFLOW_BACKEND="numpy")
    proc = subprocess.run([sys.executable, "-c", code],
                          capture_output=True, text=True, env=env)
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.strip() == "ok"
