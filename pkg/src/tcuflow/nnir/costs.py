"""Logical multiply-accumulate counts per layer.

One MAC is one multiply plus one add; reports that quote operations count a
MAC as two. Only convolutions and dense layers contribute; pooling,
activations, reshapes, and averaging are MAC-free by definition here.
"""

from __future__ import annotations

from .shapes import infer_shapes, spatial_positions


def layer_macs(spec, in_shape, out_shape):
    if spec.kind in ("Conv1D", "Conv2D"):
        k_elems = spec.attrs["kernel"]
        if isinstance(k_elems, tuple):
            k_elems = k_elems[0] * k_elems[1]
        return (spatial_positions(out_shape) * out_shape[-1]
                * k_elems * in_shape[-1])
    if spec.kind == "Dense":
        return in_shape[0] * spec.attrs["units"]
    return 0


def count_macs(g):
    """Total logical MACs plus a per-layer breakdown."""
    shapes = infer_shapes(g)
    per_layer = {}
    for spec in g.layers:
        per_layer[spec.name] = layer_macs(
            spec, shapes[spec.inputs[0]], shapes[spec.name])
    return sum(per_layer.values()), per_layer
