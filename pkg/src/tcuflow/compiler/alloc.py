"""Memory planning for lowered programs.

Local memory splits into a one-vector weight staging slot plus equal input
and output staging halves; every bulk transfer is chunked to fit them. dram0
holds the constant image (a negated identity tile first, then each layer's
weight tiles, biases, and averaging tiles in graph order). dram1 holds a
zero vector at address 0 (padding source), tensor buffers, and per-layer
im2col scratch, placed first-fit and freed when their last reader retires.
Flatten/Reshape outputs alias their producer's buffer.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import CapacityError
from ..nnir.graph import INPUT_NAME


@dataclass(frozen=True)
class LocalPartition:
    weight_stage: int
    in_base: int
    out_base: int
    chunk_cap: int


def local_partition(cfg):
    if cfg.local_depth < 3:
        raise CapacityError(
            "local", f"depth {cfg.local_depth} cannot hold a weight staging "
            f"slot plus input and output staging vectors")
    cap = (cfg.local_depth - 1) // 2
    return LocalPartition(weight_stage=0, in_base=1, out_base=1 + cap,
                          chunk_cap=cap)


@dataclass(frozen=True)
class Buffer:
    region: str
    base: int
    extent: int


@dataclass(frozen=True)
class ConstSegment:
    base: int
    extent: int


NEG_IDENTITY = "neg_identity"


@dataclass
class MemoryPlan:
    local: LocalPartition
    tensor_buffers: dict   # tensor name -> Buffer (aliases share one)
    scratch: dict          # conv layer name -> im2col Buffer
    const_segments: dict   # NEG_IDENTITY / "w:<layer>" / "b:<layer>" / "avg:<layer>"
    const_extent: int
    chunks: dict           # layer name -> staging chunk (vectors)
    peaks: dict            # region -> high-water vectors


class _FirstFit:
    """Address-ordered first-fit allocator over [reserve, depth)."""

    def __init__(self, region, depth, reserve):
        self.region = region
        self.depth = depth
        self.free = [(reserve, depth - reserve)] if depth > reserve else []
        self.high_water = reserve

    def alloc(self, extent, what):
        for i, (base, size) in enumerate(self.free):
            if size >= extent:
                if size == extent:
                    del self.free[i]
                else:
                    self.free[i] = (base + extent, size - extent)
                self.high_water = max(self.high_water, base + extent)
                return base
        raise CapacityError(
            self.region, f"no room for {what} ({extent} vectors in a "
            f"{self.depth}-deep memory)")

    def release(self, base, extent):
        self.free.append((base, extent))
        self.free.sort()
        merged = [self.free[0]]
        for b, s in self.free[1:]:
            pb, ps = merged[-1]
            if pb + ps == b:
                merged[-1] = (pb, ps + s)
            else:
                merged.append((b, s))
        self.free = merged


_ALIAS_KINDS = ("Flatten", "Reshape")


def _origins(g):
    """Resolve every tensor to the buffer-owning tensor it aliases."""
    origin = {INPUT_NAME: INPUT_NAME}
    for spec in g.layers:
        if spec.kind in _ALIAS_KINDS:
            origin[spec.name] = origin[spec.inputs[0]]
        else:
            origin[spec.name] = spec.name
    return origin


def _layer_chunk(spec, part, cfg, layouts):
    """Staging chunk for the unweighted kinds; validates depth minima."""
    a = cfg.array_size
    cap = part.chunk_cap
    if spec.kind in ("MaxPool1D", "MaxPool2D"):
        if cfg.acc_depth < 3:
            raise CapacityError(
                "acc", f"depth {cfg.acc_depth} cannot hold the three "
                f"running vectors max pooling needs ({spec.name!r})")
        return 1
    if spec.kind == "ReLU":
        return min(layouts[spec.name].vectors(a), cap, cfg.acc_depth)
    if spec.kind == "Add":
        if cfg.acc_depth < 2:
            raise CapacityError(
                "acc", f"depth {cfg.acc_depth} cannot hold both addend "
                f"vectors for layer {spec.name!r}")
        return min(layouts[spec.name].vectors(a), cap, cfg.acc_depth // 2)
    if spec.kind == "GlobalAvgPool":
        return min(layouts[spec.inputs[0]].positions, cap)
    return None


def allocate(g, cfg, plan):
    """MemoryPlan for a tiling plan; raises CapacityError when it cannot fit."""
    a = cfg.array_size
    part = local_partition(cfg)
    layouts = plan.layouts

    # Constant image layout (dram0).
    const_segments = {NEG_IDENTITY: ConstSegment(0, a)}
    cursor = a
    for spec in g.layers:
        if spec.name in plan.gemm:
            t = plan.gemm[spec.name]
            w_extent = t.n_tiles * t.k_tiles * a
            const_segments["w:" + spec.name] = ConstSegment(cursor, w_extent)
            cursor += w_extent
            const_segments["b:" + spec.name] = ConstSegment(cursor, t.n_tiles)
            cursor += t.n_tiles
        elif spec.kind == "GlobalAvgPool":
            const_segments["avg:" + spec.name] = ConstSegment(cursor, a)
            cursor += a
    if cursor > cfg.dram0_depth:
        raise CapacityError(
            "dram0", f"constant image needs {cursor} vectors, depth is "
            f"{cfg.dram0_depth}")

    origin = _origins(g)
    last_use = {}
    for i, spec in enumerate(g.layers):
        if spec.kind in _ALIAS_KINDS:
            continue
        for src in spec.inputs:
            last_use[origin[src]] = i
    last_use[origin[g.output]] = len(g.layers)  # result stays resident

    dram1 = _FirstFit("dram1", cfg.dram1_depth, reserve=1)  # 0 is the zero page
    buffers = {}

    def place(extent, what):
        return Buffer("dram1", dram1.alloc(extent, what), extent)

    buffers[INPUT_NAME] = place(
        layouts[INPUT_NAME].vectors(a), "the input tensor")

    chunks = {}
    scratch = {}
    local_peak = 3
    acc_peak = 1
    for i, spec in enumerate(g.layers):
        if spec.kind in _ALIAS_KINDS:
            buffers[spec.name] = buffers[origin[spec.name]]
            continue
        buffers[spec.name] = place(
            layouts[spec.name].vectors(a),
            f"the output of layer {spec.name!r}")
        if spec.name in plan.gemm:
            if cfg.acc_depth < 2:
                raise CapacityError(
                    "acc", f"depth {cfg.acc_depth} cannot hold a bias "
                    f"vector plus one output row for layer {spec.name!r}")
            t = plan.gemm[spec.name]
            chunk = min(t.m, cfg.acc_depth - 1, part.chunk_cap)
            if spec.kind != "Dense":
                scratch[spec.name] = place(
                    t.k_tiles * t.m,
                    f"the window buffer of layer {spec.name!r}")
            local_use = 1 + 2 * chunk
            acc_use = 1 + chunk
        else:
            chunk = _layer_chunk(spec, part, cfg, layouts)
            if spec.kind in ("MaxPool1D", "MaxPool2D"):
                local_use, acc_use = 3, 3
            elif spec.kind == "GlobalAvgPool":
                local_use, acc_use = 1 + chunk + 1, 1
            elif spec.kind == "Add":
                local_use, acc_use = 1 + 2 * chunk, 2 * chunk
            else:  # ReLU
                local_use, acc_use = 1 + 2 * chunk, chunk
        chunks[spec.name] = chunk
        local_peak = max(local_peak, local_use)
        acc_peak = max(acc_peak, acc_use)
        if spec.name in scratch:
            buf = scratch[spec.name]
            dram1.release(buf.base, buf.extent)
        for src in {origin[s] for s in spec.inputs}:
            if last_use.get(src) == i:
                buf = buffers[src]
                dram1.release(buf.base, buf.extent)

    peaks = {"local": local_peak, "acc": acc_peak,
             "dram0": cursor, "dram1": dram1.high_water}
    return MemoryPlan(local=part, tensor_buffers=buffers, scratch=scratch,
                      const_segments=const_segments, const_extent=cursor,
                      chunks=chunks, peaks=peaks)
