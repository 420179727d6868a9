"""Layer-graph intermediate representation.

A model is a flat list of layers in topological order. Each layer names its
producers; the reserved name "input" refers to the graph input tensor. The
representation is deliberately small: enough to express little convolutional
classifiers, nothing more.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeError

INPUT_NAME = "input"

KINDS = (
    "Conv1D", "Conv2D", "Dense", "MaxPool1D", "MaxPool2D",
    "ReLU", "Add", "Flatten", "Reshape", "GlobalAvgPool",
)

# attrs per kind: name -> (required, default). 2-D kernel/stride/pool attrs
# accept a single int and are canonicalized to pairs.
_ATTR_SCHEMA = {
    "Conv1D": {"kernel": (True, None), "stride": (False, 1),
               "padding": (False, "valid"), "channels": (True, None)},
    "Conv2D": {"kernel": (True, None), "stride": (False, (1, 1)),
               "padding": (False, "valid"), "channels": (True, None)},
    "Dense": {"units": (True, None)},
    "MaxPool1D": {"pool": (True, None), "stride": (False, None),
                  "padding": (False, "valid")},
    "MaxPool2D": {"pool": (True, None), "stride": (False, None),
                  "padding": (False, "valid")},
    "ReLU": {},
    "Add": {},
    "Flatten": {},
    "Reshape": {"dims": (True, None)},
    "GlobalAvgPool": {},
}

_PAIR_ATTRS = {"Conv2D": ("kernel", "stride"), "MaxPool2D": ("pool", "stride")}

WEIGHTED_KINDS = ("Conv1D", "Conv2D", "Dense")


def _as_pair(value):
    if isinstance(value, (tuple, list)):
        if len(value) != 2:
            raise ShapeError(f"expected 2 values, got {value!r}")
        return (int(value[0]), int(value[1]))
    return (int(value), int(value))


def normalize_attrs(kind, attrs, layer_name="?"):
    """Fill defaults and canonicalize attribute values for one layer kind."""
    if kind not in KINDS:
        raise ShapeError(f"layer {layer_name!r}: unknown kind {kind!r}")
    schema = _ATTR_SCHEMA[kind]
    unknown = set(attrs) - set(schema)
    if unknown:
        raise ShapeError(
            f"layer {layer_name!r}: unknown attributes {sorted(unknown)}")
    out = {}
    for key, (required, default) in schema.items():
        if key in attrs:
            out[key] = attrs[key]
        elif required:
            raise ShapeError(f"layer {layer_name!r}: missing attribute {key!r}")
        else:
            out[key] = default
    if kind in _PAIR_ATTRS:
        for key in _PAIR_ATTRS[kind]:
            if out[key] is not None:
                out[key] = _as_pair(out[key])
    if kind in ("MaxPool1D", "MaxPool2D") and out["stride"] is None:
        out["stride"] = out["pool"]
    if kind == "Reshape":
        out["dims"] = tuple(int(d) for d in out["dims"])
        if not 1 <= len(out["dims"]) <= 3 or any(d <= 0 for d in out["dims"]):
            raise ShapeError(
                f"layer {layer_name!r}: dims must be 1..3 positive ints")
    if "padding" in out and out["padding"] not in ("valid", "same"):
        raise ShapeError(
            f"layer {layer_name!r}: padding must be 'valid' or 'same', "
            f"got {out['padding']!r}")
    for key in ("kernel", "stride", "pool", "channels", "units"):
        if key in out and not isinstance(out[key], tuple):
            out[key] = int(out[key])
            if out[key] <= 0:
                raise ShapeError(
                    f"layer {layer_name!r}: {key} must be positive")
        elif key in out and isinstance(out[key], tuple):
            if any(v <= 0 for v in out[key]):
                raise ShapeError(
                    f"layer {layer_name!r}: {key} must be positive")
    return out


@dataclass(frozen=True, eq=True)
class LayerSpec:
    """One layer: a kind, its producers, and canonicalized attributes."""

    name: str
    kind: str
    inputs: tuple
    attrs: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(
            self, "attrs", normalize_attrs(self.kind, self.attrs, self.name))


@dataclass
class ModelGraph:
    """A validated-on-demand DAG of layers with optional weights."""

    name: str
    input_shape: tuple
    layers: list
    output: str
    weights: dict = field(default_factory=dict)

    def layer(self, name):
        for spec in self.layers:
            if spec.name == name:
                return spec
        raise ShapeError(f"no layer named {name!r}")


def weight_shapes(spec, in_shape):
    """Expected (kernel, bias) shapes for a weighted layer, else None."""
    if spec.kind == "Conv1D":
        k = spec.attrs["kernel"]
        return ((k, in_shape[-1], spec.attrs["channels"]),
                (spec.attrs["channels"],))
    if spec.kind == "Conv2D":
        kh, kw = spec.attrs["kernel"]
        return ((kh, kw, in_shape[-1], spec.attrs["channels"]),
                (spec.attrs["channels"],))
    if spec.kind == "Dense":
        return ((in_shape[0], spec.attrs["units"]), (spec.attrs["units"],))
    return None


def validate_graph(g):
    """Structural checks; raises ShapeError with the offending layer named."""
    if not isinstance(g.input_shape, tuple) or not 1 <= len(g.input_shape) <= 3:
        raise ShapeError(f"input shape must have rank 1..3, got {g.input_shape}")
    if any(d <= 0 for d in g.input_shape):
        raise ShapeError(f"input dims must be positive, got {g.input_shape}")
    if not g.layers:
        raise ShapeError("graph has no layers")
    seen = {INPUT_NAME}
    for spec in g.layers:
        if spec.name in seen or spec.name == INPUT_NAME:
            raise ShapeError(f"duplicate layer name {spec.name!r}")
        arity = 2 if spec.kind == "Add" else 1
        if len(spec.inputs) != arity:
            raise ShapeError(
                f"layer {spec.name!r}: {spec.kind} takes {arity} input(s), "
                f"got {len(spec.inputs)}")
        for src in spec.inputs:
            if src not in seen:
                raise ShapeError(
                    f"layer {spec.name!r}: input {src!r} is not defined "
                    f"earlier in the layer list")
        seen.add(spec.name)
    names = {spec.name for spec in g.layers}
    if g.output not in names:
        raise ShapeError(f"output layer {g.output!r} does not exist")
    consumed = {src for spec in g.layers for src in spec.inputs}
    sinks = [spec.name for spec in g.layers if spec.name not in consumed]
    if sinks != [g.output]:
        raise ShapeError(
            f"graph must have exactly one sink, the output; found {sinks}")


def validate_weights(g, shapes):
    """Check the weight store against the graph; raises naming the layer."""
    for spec in g.layers:
        expected = weight_shapes(spec, shapes[spec.inputs[0]])
        if expected is None:
            if spec.name in g.weights:
                raise ShapeError(
                    f"layer {spec.name!r}: {spec.kind} takes no weights")
            continue
        if spec.name not in g.weights:
            raise ShapeError(f"layer {spec.name!r}: missing weights")
        kernel, bias = g.weights[spec.name]
        kernel = np.asarray(kernel)
        bias = np.asarray(bias)
        if tuple(kernel.shape) != expected[0]:
            raise ShapeError(
                f"layer {spec.name!r}: kernel shape {tuple(kernel.shape)} "
                f"!= expected {expected[0]}")
        if tuple(bias.shape) != expected[1]:
            raise ShapeError(
                f"layer {spec.name!r}: bias shape {tuple(bias.shape)} "
                f"!= expected {expected[1]}")
