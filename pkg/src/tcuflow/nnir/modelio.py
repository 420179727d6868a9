"""Model persistence: a line-based text manifest plus a raw weight blob.

The manifest (<base>.model) is human-diffable; the blob (<base>.weights) is
the concatenation of little-endian float64 kernel-then-bias arrays in layer
order. Byte layouts are documented in docs/formats.md.
"""

from __future__ import annotations

import os

import numpy as np

from ..errors import FormatError
from .graph import KINDS, LayerSpec, ModelGraph, weight_shapes
from .shapes import infer_shapes

_MAGIC = "# tcuflow model manifest v1"


def _attr_text(value):
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def _format_layer_line(spec):
    parts = [f"layer {spec.name} {spec.kind}",
             "inputs=" + ",".join(spec.inputs)]
    for key in sorted(spec.attrs):
        parts.append(f"{key}={_attr_text(spec.attrs[key])}")
    return " ".join(parts)


def save_model(g, base_path):
    """Write <base>.model and <base>.weights; returns the two paths."""
    shapes = infer_shapes(g)  # validates structure
    from .graph import validate_weights
    validate_weights(g, shapes)
    lines = [_MAGIC,
             f"model {g.name}",
             "input " + " ".join(str(d) for d in g.input_shape),
             f"output {g.output}"]
    blob = bytearray()
    for spec in g.layers:
        lines.append(_format_layer_line(spec))
        if spec.name in g.weights:
            kernel, bias = g.weights[spec.name]
            blob += np.asarray(kernel, dtype="<f8").tobytes()
            blob += np.asarray(bias, dtype="<f8").tobytes()
    manifest_path = base_path + ".model"
    weights_path = base_path + ".weights"
    with open(manifest_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    with open(weights_path, "wb") as fh:
        fh.write(bytes(blob))
    return manifest_path, weights_path


def _parse_attr_value(key, text):
    if key == "padding":
        return text
    if "," in text:
        return tuple(int(v) for v in text.split(","))
    return int(text)


def load_model(path):
    """Load a model from <base>.model (or the base path without suffix)."""
    base = path[:-len(".model")] if path.endswith(".model") else path
    manifest_path = base + ".model"
    weights_path = base + ".weights"
    try:
        with open(manifest_path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise FormatError(f"cannot read model manifest: {exc}") from exc

    name = None
    input_shape = None
    output = None
    layers = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        tokens = body.split()
        tag = tokens[0]
        if tag == "model":
            if len(tokens) != 2:
                raise FormatError(f"{manifest_path}:{lineno}: model needs a name")
            name = tokens[1]
        elif tag == "input":
            try:
                input_shape = tuple(int(t) for t in tokens[1:])
            except ValueError:
                raise FormatError(
                    f"{manifest_path}:{lineno}: input dims must be integers")
            if not input_shape:
                raise FormatError(f"{manifest_path}:{lineno}: input needs dims")
        elif tag == "output":
            if len(tokens) != 2:
                raise FormatError(f"{manifest_path}:{lineno}: output needs a name")
            output = tokens[1]
        elif tag == "layer":
            if len(tokens) < 3:
                raise FormatError(
                    f"{manifest_path}:{lineno}: layer needs a name and a kind")
            lname, kind = tokens[1], tokens[2]
            if kind not in KINDS:
                raise FormatError(
                    f"{manifest_path}:{lineno}: unknown layer kind {kind!r}")
            inputs = ()
            attrs = {}
            for token in tokens[3:]:
                if "=" not in token:
                    raise FormatError(
                        f"{manifest_path}:{lineno}: expected key=value, "
                        f"got {token!r}")
                key, value = token.split("=", 1)
                if key == "inputs":
                    inputs = tuple(value.split(","))
                else:
                    try:
                        attrs[key] = _parse_attr_value(key, value)
                    except ValueError:
                        raise FormatError(
                            f"{manifest_path}:{lineno}: bad value for "
                            f"{key!r}: {value!r}")
            try:
                layers.append(LayerSpec(lname, kind, inputs, attrs))
            except Exception as exc:
                raise FormatError(f"{manifest_path}:{lineno}: {exc}") from exc
        else:
            raise FormatError(
                f"{manifest_path}:{lineno}: unknown directive {tag!r}")
    if name is None or input_shape is None or output is None:
        raise FormatError(
            f"{manifest_path}: manifest must declare model, input, and output")

    g = ModelGraph(name=name, input_shape=input_shape, layers=layers,
                   output=output, weights={})
    shapes = infer_shapes(g)

    if not os.path.exists(weights_path):
        expected_any = any(weight_shapes(s, shapes[s.inputs[0]]) for s in layers)
        if expected_any:
            raise FormatError(f"missing weight blob: {weights_path}")
        return g
    with open(weights_path, "rb") as fh:
        blob = fh.read()
    offset = 0
    for spec in layers:
        expected = weight_shapes(spec, shapes[spec.inputs[0]])
        if expected is None:
            continue
        kshape, bshape = expected
        knum = int(np.prod(kshape))
        bnum = int(np.prod(bshape))
        need = (knum + bnum) * 8
        if offset + need > len(blob):
            raise FormatError(
                f"{weights_path}: truncated at layer {spec.name!r} "
                f"(need {need} more bytes, have {len(blob) - offset})")
        kernel = np.frombuffer(
            blob, dtype="<f8", count=knum, offset=offset).reshape(kshape)
        offset += knum * 8
        bias = np.frombuffer(blob, dtype="<f8", count=bnum, offset=offset)
        offset += bnum * 8
        g.weights[spec.name] = (kernel.copy(), bias.copy())
    if offset != len(blob):
        raise FormatError(
            f"{weights_path}: {len(blob) - offset} trailing bytes")
    return g
