"""Physical tensor layout on the vector memories.

Tensors live in dram1 as planes of array_size-wide vectors: channel group g
of spatial position p sits at vector g * positions + p. Plane-major order
keeps every bulk access the lowering needs contiguous (weight streaming,
window runs, per-group writebacks).

Flatten and Reshape never move data. They alias the producer's buffer and
keep its physical layout; a consuming Dense layer absorbs the layout by
remapping weight rows (see tiling), and consumers that need the canonical
layout of their logical input shape check for it here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import LoweringError
from ..nnir.graph import INPUT_NAME
from ..nnir.shapes import spatial_positions


@dataclass(frozen=True)
class PhysLayout:
    """positions x channels, channels padded up to whole vectors."""

    positions: int
    channels: int

    def groups(self, array_size):
        return -(-self.channels // array_size)

    def vectors(self, array_size):
        return self.positions * self.groups(array_size)


def canonical_layout(shape):
    return PhysLayout(spatial_positions(shape), shape[-1])


def propagate_layouts(g, shapes):
    """Physical layout per tensor; raises where lowering cannot honor one."""
    layouts = {INPUT_NAME: canonical_layout(shapes[INPUT_NAME])}
    for spec in g.layers:
        ins = [layouts[src] for src in spec.inputs]
        if spec.kind in ("Conv1D", "Conv2D", "MaxPool1D", "MaxPool2D",
                         "GlobalAvgPool"):
            need = canonical_layout(shapes[spec.inputs[0]])
            if ins[0] != need:
                raise LoweringError(
                    f"layer {spec.name!r}: {spec.kind} needs its input in "
                    f"canonical layout {need}, got {ins[0]} (an upstream "
                    f"Flatten/Reshape changed the vector packing)")
            layouts[spec.name] = canonical_layout(shapes[spec.name])
        elif spec.kind == "Dense":
            layouts[spec.name] = canonical_layout(shapes[spec.name])
        elif spec.kind in ("ReLU", "Flatten", "Reshape"):
            layouts[spec.name] = ins[0]
        elif spec.kind == "Add":
            if ins[0] != ins[1]:
                raise LoweringError(
                    f"layer {spec.name!r}: Add inputs have different "
                    f"physical layouts {ins[0]} vs {ins[1]}")
            layouts[spec.name] = ins[0]
        else:
            raise LoweringError(f"layer {spec.name!r}: no layout rule "
                                f"for kind {spec.kind!r}")
    return layouts


def pack_tensor(raw, layout, array_size):
    """Logical raw tensor -> [vectors, array_size] plane-major image.

    Channel padding lanes are zero-filled.
    """
    p, c = layout.positions, layout.channels
    flat = np.asarray(raw, dtype=np.int64).reshape(p, c)
    groups = layout.groups(array_size)
    padded = np.zeros((p, groups * array_size), dtype=np.int64)
    padded[:, :c] = flat
    return np.ascontiguousarray(
        padded.reshape(p, groups, array_size).transpose(1, 0, 2)
        .reshape(groups * p, array_size))


def unpack_tensor(vectors, layout, array_size):
    """Inverse of pack_tensor; returns a (positions, channels) raw array."""
    p, c = layout.positions, layout.channels
    groups = layout.groups(array_size)
    arr = np.asarray(vectors, dtype=np.int64).reshape(groups, p, array_size)
    return np.ascontiguousarray(
        arr.transpose(1, 0, 2).reshape(p, groups * array_size)[:, :c])
