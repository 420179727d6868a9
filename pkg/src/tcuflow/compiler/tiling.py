"""Tile planning: how each weighted layer maps onto the array.

Convolutions flatten to GEMM through an im2col buffer whose reduction rows
stay block-aligned: one tile per (kernel tap, input channel group). Lane
packing across taps is not materializable with vector-granular moves, so
partially filled groups carry zero lanes; the excess work shows up in the
reported efficiency, never in results. Dense layers reduce over the input
buffer's vectors directly, whatever physical layout it inherited.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import LoweringError, QuantError
from ..nnir.costs import count_macs
from ..nnir.shapes import infer_shapes
from ..quant import FixedPointFormat
from .layout import canonical_layout, propagate_layouts


def compile_format(cfg):
    """Fixed-point format for an architecture's compiled path."""
    try:
        return FixedPointFormat.for_width(cfg.data_width_bits, cfg.frac_bits)
    except QuantError as exc:
        raise LoweringError(
            f"data_width_bits={cfg.data_width_bits} unsupported by the "
            f"compiled path: {exc}") from exc


@dataclass(frozen=True)
class GemmTiling:
    """One weighted layer flattened to a tiled matrix multiply."""

    m: int        # streamed rows (output positions; 1 for Dense)
    k_tiles: int  # reduction tiles of array_size rows each
    n_tiles: int  # output tiles of array_size columns each

    def k_pad(self, array_size):
        return self.k_tiles * array_size

    def n_pad(self, array_size):
        return self.n_tiles * array_size


@dataclass
class TilingPlan:
    shapes: dict
    layouts: dict
    gemm: dict
    fmt: FixedPointFormat
    macs_graph: int


def _headroom_rows(fmt):
    """Largest padded reduction length whose accumulation cannot saturate."""
    max_product = (1 << (fmt.total_bits - 1)) ** 2
    bias_worst = 1 << (fmt.total_bits - 1 + fmt.frac_bits)
    return (fmt.acc_max - bias_worst) // max_product


def plan_tiling(g, cfg):
    """Shape/layout analysis plus per-layer GEMM tilings.

    Raises LoweringError for graphs the instruction set cannot express or
    whose reductions would outgrow the accumulator headroom that makes
    tiled and logical accumulation orders agree.
    """
    fmt = compile_format(cfg)
    shapes = infer_shapes(g)
    layouts = propagate_layouts(g, shapes)
    a = cfg.array_size
    safe_rows = _headroom_rows(fmt)
    gemm = {}
    for spec in g.layers:
        if spec.kind in ("Conv1D", "Conv2D"):
            in_shape = shapes[spec.inputs[0]]
            out_shape = shapes[spec.name]
            k_elems = spec.attrs["kernel"]
            if isinstance(k_elems, tuple):
                k_elems = k_elems[0] * k_elems[1]
            in_groups = canonical_layout(in_shape).groups(a)
            tiling = GemmTiling(
                m=canonical_layout(out_shape).positions,
                k_tiles=k_elems * in_groups,
                n_tiles=-(-out_shape[-1] // a))
        elif spec.kind == "Dense":
            in_layout = layouts[spec.inputs[0]]
            tiling = GemmTiling(
                m=1,
                k_tiles=in_layout.vectors(a),
                n_tiles=-(-spec.attrs["units"] // a))
        elif spec.kind == "GlobalAvgPool":
            positions = layouts[spec.inputs[0]].positions
            limit = fmt.acc_max // (1 << (fmt.frac_bits + fmt.total_bits - 1))
            if positions > limit:
                raise LoweringError(
                    f"layer {spec.name!r}: {positions} positions exceed the "
                    f"averaging headroom ({limit}) of the "
                    f"{fmt.total_bits}/{fmt.acc_bits}-bit format")
            continue
        else:
            continue
        if tiling.k_pad(a) > safe_rows:
            raise LoweringError(
                f"layer {spec.name!r}: padded reduction of "
                f"{tiling.k_pad(a)} rows exceeds the saturation-free bound "
                f"({safe_rows}) of the {fmt.total_bits}/{fmt.acc_bits}-bit "
                f"format")
        gemm[spec.name] = tiling
    macs, _ = count_macs(g)
    return TilingPlan(shapes=shapes, layouts=layouts, gemm=gemm, fmt=fmt,
                      macs_graph=macs)
