"""Shape inference and the shared sliding-window arithmetic.

Window semantics follow the usual framework conventions: 'valid' drops
partial windows, 'same' keeps ceil(in/stride) outputs with the shortfall
padded before/after (before gets the smaller half). Convolutions pad with
zeros; max pooling ignores out-of-range taps. Every executor and the
compiler use these helpers so the three paths cannot drift apart.
"""

from __future__ import annotations

from ..errors import ShapeError
from .graph import INPUT_NAME, validate_graph


def window_out(in_size, kernel, stride, padding):
    """Output length of one sliding-window dimension."""
    if padding == "same":
        return -(-in_size // stride)
    if kernel > in_size:
        raise ShapeError(
            f"kernel {kernel} exceeds input extent {in_size} (valid padding)")
    return (in_size - kernel) // stride + 1


def pad_before(in_size, kernel, stride, padding):
    """Leading pad for one dimension (0 under 'valid')."""
    if padding != "same":
        return 0
    out = window_out(in_size, kernel, stride, padding)
    total = max((out - 1) * stride + kernel - in_size, 0)
    return total // 2


def _conv1d_shape(spec, s):
    if len(s) != 2:
        raise ShapeError(f"layer {spec.name!r}: Conv1D needs rank-2 input, got {s}")
    a = spec.attrs
    out = window_out(s[0], a["kernel"], a["stride"], a["padding"])
    return (out, a["channels"])


def _conv2d_shape(spec, s):
    if len(s) != 3:
        raise ShapeError(f"layer {spec.name!r}: Conv2D needs rank-3 input, got {s}")
    a = spec.attrs
    oh = window_out(s[0], a["kernel"][0], a["stride"][0], a["padding"])
    ow = window_out(s[1], a["kernel"][1], a["stride"][1], a["padding"])
    return (oh, ow, a["channels"])


def _pool1d_shape(spec, s):
    if len(s) != 2:
        raise ShapeError(f"layer {spec.name!r}: MaxPool1D needs rank-2 input, got {s}")
    a = spec.attrs
    return (window_out(s[0], a["pool"], a["stride"], a["padding"]), s[1])


def _pool2d_shape(spec, s):
    if len(s) != 3:
        raise ShapeError(f"layer {spec.name!r}: MaxPool2D needs rank-3 input, got {s}")
    a = spec.attrs
    oh = window_out(s[0], a["pool"][0], a["stride"][0], a["padding"])
    ow = window_out(s[1], a["pool"][1], a["stride"][1], a["padding"])
    return (oh, ow, s[2])


def _dense_shape(spec, s):
    if len(s) != 1:
        raise ShapeError(
            f"layer {spec.name!r}: Dense needs rank-1 input (Flatten first), "
            f"got {s}")
    return (spec.attrs["units"],)


def _flatten_shape(spec, s):
    n = 1
    for d in s:
        n *= d
    return (n,)


def _reshape_shape(spec, s):
    dims = spec.attrs["dims"]
    have = 1
    for d in s:
        have *= d
    want = 1
    for d in dims:
        want *= d
    if have != want:
        raise ShapeError(
            f"layer {spec.name!r}: cannot reshape {s} ({have} elements) "
            f"to {dims} ({want} elements)")
    return dims


def _gap_shape(spec, s):
    if len(s) not in (2, 3):
        raise ShapeError(
            f"layer {spec.name!r}: GlobalAvgPool needs rank-2/3 input, got {s}")
    return (s[-1],)


_SHAPE_RULES = {
    "Conv1D": _conv1d_shape,
    "Conv2D": _conv2d_shape,
    "MaxPool1D": _pool1d_shape,
    "MaxPool2D": _pool2d_shape,
    "Dense": _dense_shape,
    "Flatten": _flatten_shape,
    "Reshape": _reshape_shape,
    "GlobalAvgPool": _gap_shape,
}


def infer_shapes(g):
    """Shapes for every tensor in the graph, keyed by producer name.

    Validates the graph structure first; the result includes "input".
    """
    validate_graph(g)
    shapes = {INPUT_NAME: tuple(g.input_shape)}
    for spec in g.layers:
        ins = [shapes[src] for src in spec.inputs]
        if spec.kind == "ReLU":
            shapes[spec.name] = ins[0]
        elif spec.kind == "Add":
            if ins[0] != ins[1]:
                raise ShapeError(
                    f"layer {spec.name!r}: Add inputs differ: {ins[0]} vs {ins[1]}")
            shapes[spec.name] = ins[0]
        else:
            shapes[spec.name] = _SHAPE_RULES[spec.kind](spec, ins[0])
    return shapes


def spatial_positions(shape):
    """Number of spatial positions under the trailing channel dimension."""
    if len(shape) == 1:
        return 1
    n = 1
    for d in shape[:-1]:
        n *= d
    return n
