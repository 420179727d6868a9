"""Float64 reference executor.

This is the semantic ground truth for the package: every other path (the
quantized reference and the compiled simulation) is judged against it. It
runs layers in list order on plain numpy arrays and can report how many
scalar multiplies each layer actually performed, taken from the shapes of
the operands it materialized rather than from any cost formula.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from .graph import INPUT_NAME, validate_weights
from .shapes import infer_shapes
from .windows import gather_patches, window_table


def _conv_float(spec, x, kernel, bias):
    ndim = x.ndim - 1
    k = spec.attrs["kernel"]
    s = spec.attrs["stride"]
    if ndim == 1:
        k, s = (k,), (s,)
    table, out_spatial = window_table(x.shape[:-1], k, s, spec.attrs["padding"])
    flat = x.reshape(-1, x.shape[-1])
    patches = gather_patches(flat, table, 0.0)
    m = patches.shape[0]
    w2d = kernel.reshape(-1, kernel.shape[-1])
    y = patches.reshape(m, -1) @ w2d + bias
    mults = m * w2d.shape[0] * w2d.shape[1]
    return y.reshape(out_spatial + (kernel.shape[-1],)), mults


def _pool_float(spec, x):
    ndim = x.ndim - 1
    p = spec.attrs["pool"]
    s = spec.attrs["stride"]
    if ndim == 1:
        p, s = (p,), (s,)
    table, out_spatial = window_table(x.shape[:-1], p, s, spec.attrs["padding"])
    flat = x.reshape(-1, x.shape[-1])
    patches = gather_patches(flat, table, -np.inf)
    return patches.max(axis=1).reshape(out_spatial + (x.shape[-1],))


def execute_float(g, x, want_multiplies=False):
    """Run the graph on one input tensor in float64.

    Returns the output array, or (output, per-layer multiply counts) when
    want_multiplies is set.
    """
    shapes = infer_shapes(g)
    validate_weights(g, shapes)
    x = np.asarray(x, dtype=np.float64)
    if tuple(x.shape) != shapes[INPUT_NAME]:
        raise ShapeError(
            f"input shape {tuple(x.shape)} != graph input {shapes[INPUT_NAME]}")
    values = {INPUT_NAME: x}
    mults = {}
    for spec in g.layers:
        ins = [values[src] for src in spec.inputs]
        mults[spec.name] = 0
        if spec.kind in ("Conv1D", "Conv2D"):
            kernel, bias = (np.asarray(a, dtype=np.float64)
                            for a in g.weights[spec.name])
            out, mults[spec.name] = _conv_float(spec, ins[0], kernel, bias)
        elif spec.kind == "Dense":
            kernel, bias = (np.asarray(a, dtype=np.float64)
                            for a in g.weights[spec.name])
            out = ins[0] @ kernel + bias
            mults[spec.name] = kernel.shape[0] * kernel.shape[1]
        elif spec.kind in ("MaxPool1D", "MaxPool2D"):
            out = _pool_float(spec, ins[0])
        elif spec.kind == "ReLU":
            out = np.maximum(ins[0], 0.0)
        elif spec.kind == "Add":
            out = ins[0] + ins[1]
        elif spec.kind == "Flatten":
            out = ins[0].reshape(-1)
        elif spec.kind == "Reshape":
            out = ins[0].reshape(spec.attrs["dims"])
        else:  # GlobalAvgPool
            out = ins[0].reshape(-1, ins[0].shape[-1]).mean(axis=0)
        values[spec.name] = out
    result = values[g.output]
    if want_multiplies:
        return result, mults
    return result
