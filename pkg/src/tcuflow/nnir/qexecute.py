"""Quantized reference executor.

Defines the fixed-point semantics of every layer on logical tensors, free of
any tiling or data movement. The compiled instruction stream must reproduce
these values bit for bit; the compiler enforces the accumulator headroom
that makes its tiled accumulation order equivalent to the logical order
used here.

Per-layer contract (raw values at scale 2**frac_bits, fmt = arch format):
  Conv/Dense   rescale(sum_k w*x + (bias << frac)), saturating accumulator
  ReLU         max(raw, 0)
  MaxPool      max over in-range window taps
  Add          saturate(a + b) at storage width
  GlobalAvgPool rescale(quantize(1/positions) * sum over positions)
  Flatten/Reshape row-major relabeling, values untouched
"""

from __future__ import annotations

import numpy as np

from .. import kernels
from ..errors import ShapeError
from ..quant import (DEFAULT_FORMAT, QTensor, quantize, quantize_array,
                     rescale_array)
from .graph import INPUT_NAME, validate_weights
from .shapes import infer_shapes
from .windows import gather_patches, window_table

_SENTINEL = np.int64(np.iinfo(np.int64).min)


def _conv_quant(spec, x_raw, kernel, bias, fmt):
    ndim = x_raw.ndim - 1
    k = spec.attrs["kernel"]
    s = spec.attrs["stride"]
    if ndim == 1:
        k, s = (k,), (s,)
    table, out_spatial = window_table(
        x_raw.shape[:-1], k, s, spec.attrs["padding"])
    flat = x_raw.reshape(-1, x_raw.shape[-1])
    patches = gather_patches(flat, table, np.int64(0))
    m = patches.shape[0]
    w2d = kernel.reshape(-1, kernel.shape[-1])
    y = kernels.qgemm(
        np.ascontiguousarray(patches.reshape(m, -1)),
        np.ascontiguousarray(w2d), bias, fmt.frac_bits,
        np.int64(fmt.acc_min), np.int64(fmt.acc_max),
        np.int64(fmt.raw_min), np.int64(fmt.raw_max))
    return y.reshape(out_spatial + (kernel.shape[-1],))


def _pool_quant(spec, x_raw):
    ndim = x_raw.ndim - 1
    p = spec.attrs["pool"]
    s = spec.attrs["stride"]
    if ndim == 1:
        p, s = (p,), (s,)
    table, out_spatial = window_table(
        x_raw.shape[:-1], p, s, spec.attrs["padding"])
    flat = x_raw.reshape(-1, x_raw.shape[-1])
    patches = gather_patches(flat, table, _SENTINEL)
    return patches.max(axis=1).reshape(out_spatial + (x_raw.shape[-1],))


def quantize_weights(g, fmt=DEFAULT_FORMAT):
    """Raw kernel/bias arrays for every weighted layer."""
    out = {}
    for name, (kernel, bias) in g.weights.items():
        out[name] = (quantize_array(np.asarray(kernel), fmt),
                     quantize_array(np.asarray(bias), fmt))
    return out


def execute_quant(g, x, fmt=DEFAULT_FORMAT):
    """Run the graph in fixed point; accepts a float array or a QTensor.

    Returns the output QTensor (raw values at the graph output).
    """
    shapes = infer_shapes(g)
    validate_weights(g, shapes)
    if isinstance(x, QTensor):
        if x.fmt != fmt:
            raise ShapeError(f"input format {x.fmt} != requested {fmt}")
        x_raw = x.raw
    else:
        x_raw = quantize_array(np.asarray(x, dtype=np.float64), fmt)
    if tuple(x_raw.shape) != shapes[INPUT_NAME]:
        raise ShapeError(
            f"input shape {tuple(x_raw.shape)} != graph input {shapes[INPUT_NAME]}")
    qweights = quantize_weights(g, fmt)
    values = {INPUT_NAME: x_raw.astype(np.int64)}
    for spec in g.layers:
        ins = [values[src] for src in spec.inputs]
        if spec.kind in ("Conv1D", "Conv2D"):
            kernel, bias = qweights[spec.name]
            out = _conv_quant(spec, ins[0], kernel, bias, fmt)
        elif spec.kind == "Dense":
            kernel, bias = qweights[spec.name]
            out = kernels.qgemm(
                np.ascontiguousarray(ins[0].reshape(1, -1)),
                np.ascontiguousarray(kernel), bias, fmt.frac_bits,
                np.int64(fmt.acc_min), np.int64(fmt.acc_max),
                np.int64(fmt.raw_min), np.int64(fmt.raw_max)).reshape(-1)
        elif spec.kind in ("MaxPool1D", "MaxPool2D"):
            out = _pool_quant(spec, ins[0])
        elif spec.kind == "ReLU":
            out = np.maximum(ins[0], 0)
        elif spec.kind == "Add":
            out = np.clip(ins[0] + ins[1], fmt.raw_min, fmt.raw_max)
        elif spec.kind == "Flatten":
            out = ins[0].reshape(-1)
        elif spec.kind == "Reshape":
            out = ins[0].reshape(spec.attrs["dims"])
        else:  # GlobalAvgPool
            positions = 1
            for d in ins[0].shape[:-1]:
                positions *= d
            mul = np.int64(quantize(1.0 / positions, fmt))
            wide = mul * ins[0].reshape(positions, -1).sum(
                axis=0, dtype=np.int64)
            wide = np.clip(wide, fmt.acc_min, fmt.acc_max)
            out = rescale_array(wide, fmt)
        values[spec.name] = out
    out = values[g.output]
    return QTensor(tuple(out.shape), out, fmt)
