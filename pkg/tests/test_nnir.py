"""Graph IR: shape inference, executors, MAC counts, model files.

Convolution and pooling assertions run against a brute-force oracle that
pads explicitly and walks windows with plain loops, sharing no window
arithmetic with the executors under test.
"""

import numpy as np
import pytest

from tcuflow.errors import FormatError, ShapeError
from tcuflow.nnir.costs import count_macs
from tcuflow.nnir.execute import execute_float
from tcuflow.nnir.graph import LayerSpec, ModelGraph, validate_graph
from tcuflow.nnir.modelio import load_model, save_model
from tcuflow.nnir.qexecute import execute_quant
from tcuflow.nnir.shapes import infer_shapes
from tcuflow.nnir.windows import gather_patches, window_table
from tcuflow.quant import DEFAULT_FORMAT, quantize_array

from graphgen import fill_weights, random_graph


# ------------------------------------------------------------ oracle layers

def _pad_amounts(size, kernel, stride, padding):
    if padding == "valid":
        return 0, 0, (size - kernel) // stride + 1
    out = -(-size // stride)
    total = max((out - 1) * stride + kernel - size, 0)
    return total // 2, total - total // 2, out


def _brute_conv1d(x, kernel, bias, stride, padding):
    k = kernel.shape[0]
    before, after, out = _pad_amounts(x.shape[0], k, stride, padding)
    xp = np.concatenate([np.zeros((before, x.shape[1])), x,
                         np.zeros((after, x.shape[1]))])
    y = np.empty((out, kernel.shape[2]))
    for o in range(out):
        patch = xp[o * stride:o * stride + k]
        y[o] = np.tensordot(patch, kernel, axes=([0, 1], [0, 1])) + bias
    return y


def _brute_conv2d(x, kernel, bias, stride, padding):
    kh, kw = kernel.shape[:2]
    bh, ah, oh = _pad_amounts(x.shape[0], kh, stride[0], padding)
    bw, aw, ow = _pad_amounts(x.shape[1], kw, stride[1], padding)
    xp = np.pad(x, ((bh, ah), (bw, aw), (0, 0)))
    y = np.empty((oh, ow, kernel.shape[3]))
    for r in range(oh):
        for c in range(ow):
            patch = xp[r * stride[0]:r * stride[0] + kh,
                       c * stride[1]:c * stride[1] + kw]
            y[r, c] = np.tensordot(patch, kernel,
                                   axes=([0, 1, 2], [0, 1, 2])) + bias
    return y


def _brute_pool1d(x, pool, stride, padding):
    before, after, out = _pad_amounts(x.shape[0], pool, stride, padding)
    xp = np.concatenate([np.full((before, x.shape[1]), -np.inf), x,
                         np.full((after, x.shape[1]), -np.inf)])
    return np.stack([xp[o * stride:o * stride + pool].max(axis=0)
                     for o in range(out)])


def _brute_pool2d(x, pool, stride, padding):
    bh, ah, oh = _pad_amounts(x.shape[0], pool[0], stride[0], padding)
    bw, aw, ow = _pad_amounts(x.shape[1], pool[1], stride[1], padding)
    xp = np.pad(x, ((bh, ah), (bw, aw), (0, 0)), constant_values=-np.inf)
    y = np.empty((oh, ow, x.shape[2]))
    for r in range(oh):
        for c in range(ow):
            y[r, c] = xp[r * stride[0]:r * stride[0] + pool[0],
                         c * stride[1]:c * stride[1] + pool[1]].max(axis=(0, 1))
    return y


# ---------------------------------------------------------- shape inference

def _one(kind, attrs, in_shape):
    g = ModelGraph("t", in_shape, [LayerSpec("l", kind, ("input",), attrs)],
                   "l")
    return infer_shapes(g)["l"]


@pytest.mark.parametrize("kind,attrs,in_shape,want", [
    ("Conv1D", {"kernel": 5, "channels": 8}, (187, 1), (183, 8)),
    ("Conv1D", {"kernel": 3, "channels": 4, "padding": "same"}, (10, 2),
     (10, 4)),
    ("Conv1D", {"kernel": 3, "channels": 4, "stride": 2}, (11, 2), (5, 4)),
    ("Conv2D", {"kernel": 3, "channels": 6, "padding": "same"}, (9, 7, 2),
     (9, 7, 6)),
    ("Conv2D", {"kernel": (2, 3), "stride": (2, 1), "channels": 5},
     (8, 9, 3), (4, 7, 5)),
    ("MaxPool1D", {"pool": 2}, (11, 4), (5, 4)),
    ("MaxPool2D", {"pool": 2}, (8, 6, 3), (4, 3, 3)),
    ("MaxPool2D", {"pool": (2, 2), "padding": "same"}, (7, 5, 3), (4, 3, 3)),
    ("Dense", {"units": 5}, (187,), (5,)),
    ("Flatten", {}, (6, 5, 2), (60,)),
    ("Reshape", {"dims": (3, 4)}, (12,), (3, 4)),
    ("GlobalAvgPool", {}, (10, 4), (4,)),
    ("ReLU", {}, (5, 3), (5, 3)),
])
def test_shape_inference(kind, attrs, in_shape, want):
    assert _one(kind, attrs, in_shape) == want


def test_shape_errors():
    with pytest.raises(ShapeError, match="kernel 9 exceeds"):
        _one("Conv1D", {"kernel": 9, "channels": 2}, (5, 1))
    with pytest.raises(ShapeError, match="'l'"):
        _one("Dense", {"units": 3}, (5, 2))
    with pytest.raises(ShapeError, match="'l'"):
        _one("Reshape", {"dims": (7, 2)}, (12,))


def test_validate_graph_rules():
    dense = LayerSpec("d", "Dense", ("input",), {"units": 3})
    validate_graph(ModelGraph("ok", (4,), [dense], "d"))
    with pytest.raises(ShapeError, match="duplicate"):
        validate_graph(ModelGraph("t", (4,), [dense, dense], "d"))
    with pytest.raises(ShapeError, match="not defined"):
        validate_graph(ModelGraph("t", (4,), [
            LayerSpec("d", "Dense", ("ghost",), {"units": 3})], "d"))
    with pytest.raises(ShapeError, match="exactly one sink"):
        validate_graph(ModelGraph("t", (4,), [
            dense, LayerSpec("e", "Dense", ("input",), {"units": 3})], "d"))
    with pytest.raises(ShapeError, match="takes 2"):
        validate_graph(ModelGraph("t", (4,), [
            LayerSpec("a", "Add", ("input",), {})], "a"))


def test_attr_normalization():
    spec = LayerSpec("c", "Conv2D", ("input",), {"kernel": 3, "channels": 2})
    assert spec.attrs["kernel"] == (3, 3)
    assert spec.attrs["stride"] == (1, 1)
    assert spec.attrs["padding"] == "valid"
    pool = LayerSpec("p", "MaxPool1D", ("input",), {"pool": 3})
    assert pool.attrs["stride"] == 3
    with pytest.raises(ShapeError, match="unknown attributes"):
        LayerSpec("c", "Conv1D", ("input",),
                  {"kernel": 3, "channels": 2, "rate": 2})
    with pytest.raises(ShapeError, match="missing attribute"):
        LayerSpec("c", "Conv1D", ("input",), {"kernel": 3})


# ------------------------------------------------------------- window table

def test_window_table_against_oracle_positions():
    rng = np.random.default_rng(20)
    for _ in range(50):
        length = int(rng.integers(1, 20))
        k = int(rng.integers(1, min(length, 5) + 1))
        stride = int(rng.integers(1, 4))
        padding = str(rng.choice(["valid", "same"]))
        table, out_spatial = window_table((length,), (k,), (stride,), padding)
        before, _, out = _pad_amounts(length, k, stride, padding)
        assert out_spatial == (out,)
        assert table.shape == (out, k)
        for o in range(out):
            for t in range(k):
                i = o * stride + t - before
                want = i if 0 <= i < length else -1
                assert table[o, t] == want


def test_gather_patches_fills_padding():
    x = np.array([[1.0], [2.0], [3.0]])
    table, _ = window_table((3,), (3,), (1,), "same")
    patches = gather_patches(x, table, 0.0)
    assert patches[0, 0, 0] == 0.0    # left pad
    assert patches[0, 1, 0] == 1.0
    assert patches[2, 2, 0] == 0.0    # right pad


# ------------------------------------------------------- float executor

def test_conv1d_matches_brute_force():
    rng = np.random.default_rng(21)
    for padding in ("valid", "same"):
        for stride in (1, 2):
            x = rng.uniform(-1, 1, (13, 3))
            kernel = rng.uniform(-1, 1, (4, 3, 5))
            bias = rng.uniform(-1, 1, 5)
            g = ModelGraph("t", (13, 3), [LayerSpec(
                "c", "Conv1D", ("input",),
                {"kernel": 4, "channels": 5, "stride": stride,
                 "padding": padding})], "c")
            g.weights["c"] = (kernel, bias)
            want = _brute_conv1d(x, kernel, bias, stride, padding)
            assert np.allclose(execute_float(g, x), want, atol=1e-12)


def test_conv2d_matches_brute_force():
    rng = np.random.default_rng(22)
    for padding in ("valid", "same"):
        for stride in ((1, 1), (2, 1)):
            x = rng.uniform(-1, 1, (7, 6, 2))
            kernel = rng.uniform(-1, 1, (3, 2, 2, 4))
            bias = rng.uniform(-1, 1, 4)
            g = ModelGraph("t", (7, 6, 2), [LayerSpec(
                "c", "Conv2D", ("input",),
                {"kernel": (3, 2), "channels": 4, "stride": stride,
                 "padding": padding})], "c")
            g.weights["c"] = (kernel, bias)
            want = _brute_conv2d(x, kernel, bias, stride, padding)
            assert np.allclose(execute_float(g, x), want, atol=1e-12)


def test_pools_match_brute_force():
    rng = np.random.default_rng(23)
    x1 = rng.uniform(-1, 1, (11, 3))
    g1 = ModelGraph("t", (11, 3), [LayerSpec(
        "p", "MaxPool1D", ("input",), {"pool": 3, "stride": 2})], "p")
    assert np.array_equal(execute_float(g1, x1),
                          _brute_pool1d(x1, 3, 2, "valid"))
    x2 = rng.uniform(-1, 1, (7, 5, 2))
    g2 = ModelGraph("t", (7, 5, 2), [LayerSpec(
        "p", "MaxPool2D", ("input",), {"pool": 2, "padding": "same"})], "p")
    assert np.array_equal(execute_float(g2, x2),
                          _brute_pool2d(x2, (2, 2), (2, 2), "same"))


def test_executor_alias_and_add_semantics():
    rng = np.random.default_rng(24)
    x = rng.uniform(-1, 1, (6, 2))
    layers = [
        LayerSpec("f", "Flatten", ("input",)),
        LayerSpec("r", "Reshape", ("f",), {"dims": (4, 3)}),
        LayerSpec("g", "Flatten", ("r",)),
        LayerSpec("d", "Dense", ("g",), {"units": 4}),
        LayerSpec("e", "Dense", ("g",), {"units": 4}),
        LayerSpec("s", "Add", ("d", "e")),
        LayerSpec("a", "ReLU", ("s",)),
    ]
    g = ModelGraph("t", (6, 2), layers, "a")
    fill_weights(g, rng)
    flat = x.reshape(-1)
    kd, bd = g.weights["d"]
    ke, be = g.weights["e"]
    want = np.maximum((flat @ kd + bd) + (flat @ ke + be), 0.0)
    assert np.allclose(execute_float(g, x), want, atol=1e-12)


# -------------------------------------------------------------- MAC counts

def test_count_macs_frozen_examples():
    g = ModelGraph("t", (187,), [LayerSpec("d", "Dense", ("input",),
                                           {"units": 5})], "d")
    assert count_macs(g) == (935, {"d": 935})

    conv = ModelGraph("t", (10, 3), [LayerSpec(
        "c", "Conv1D", ("input",),
        {"kernel": 3, "channels": 4, "padding": "same"})], "c")
    assert count_macs(conv)[0] == 10 * 3 * 3 * 4

    valid = ModelGraph("t", (10, 3), [LayerSpec(
        "c", "Conv1D", ("input",), {"kernel": 3, "channels": 4})], "c")
    assert count_macs(valid)[0] == 8 * 3 * 3 * 4


def test_count_macs_ignores_unweighted_layers():
    g = ModelGraph("t", (8, 4), [
        LayerSpec("p", "MaxPool1D", ("input",), {"pool": 2}),
        LayerSpec("r", "ReLU", ("p",)),
        LayerSpec("v", "GlobalAvgPool", ("r",)),
    ], "v")
    assert count_macs(g) == (0, {"p": 0, "r": 0, "v": 0})


def test_count_macs_matches_instrumented_executor():
    for seed in range(30):
        rng = np.random.default_rng(3000 + seed)
        g, x = random_graph(rng)
        total, per_layer = count_macs(g)
        _, mults = execute_float(g, x, want_multiplies=True)
        assert mults == per_layer
        assert total == sum(mults.values())


# ---------------------------------------------------------- quant executor

def test_quant_executor_tracks_float_when_tame():
    # small weights and inputs keep everything far from saturation, so the
    # quantized result must sit within accumulated rounding error
    rng = np.random.default_rng(25)
    for seed in range(10):
        g, x = random_graph(np.random.default_rng(400 + seed), max_layers=3)
        qt = execute_quant(g, x)
        ref = execute_float(g, x)
        assert qt.shape == tuple(np.asarray(ref).shape)
        err = np.max(np.abs(qt.to_float() - ref)) if np.asarray(ref).size \
            else 0.0
        assert err < 0.3


def test_quant_executor_accepts_qtensor_input():
    from tcuflow.quant import QTensor
    g = ModelGraph("t", (4,), [LayerSpec("r", "ReLU", ("input",))], "r")
    x = np.array([0.5, -0.5, 1.0, -2.0])
    qt = QTensor.from_float(x)
    out = execute_quant(g, qt)
    assert np.array_equal(out.raw, np.maximum(quantize_array(x), 0))


# ---------------------------------------------------------------- model io

def test_model_round_trip(tmp_path):
    rng = np.random.default_rng(26)
    for seed in range(8):
        g, _ = random_graph(np.random.default_rng(500 + seed))
        base = str(tmp_path / f"m{seed}")
        save_model(g, base)
        loaded = load_model(base + ".model")
        assert loaded.name == g.name
        assert tuple(loaded.input_shape) == tuple(g.input_shape)
        assert loaded.output == g.output
        assert loaded.layers == g.layers
        assert set(loaded.weights) == set(g.weights)
        for name in g.weights:
            for got, want in zip(loaded.weights[name], g.weights[name]):
                assert np.array_equal(got, np.asarray(want, dtype=np.float64))


def test_model_file_errors(tmp_path):
    base = str(tmp_path / "m")
    g = ModelGraph("t", (4,), [LayerSpec("d", "Dense", ("input",),
                                         {"units": 2})], "d")
    g.weights["d"] = (np.zeros((4, 2)), np.zeros(2))
    save_model(g, base)

    manifest = base + ".model"
    text = open(manifest).read()

    open(manifest, "w").write("bogus header\n" + text.split("\n", 1)[1])
    with pytest.raises(FormatError):
        load_model(manifest)

    open(manifest, "w").write(text.replace("layer d Dense", "layer d Blob"))
    with pytest.raises(FormatError, match=r"\.model:\d+"):
        load_model(manifest)

    open(manifest, "w").write(text)
    import os
    os.remove(f"{base}.weights")
    with pytest.raises(FormatError, match="missing weight blob"):
        load_model(manifest)
