"""Lowering: a validated graph plus weights -> instruction stream.

Every layer becomes DataMove/LoadWeights/MatMul/SIMD sequences over the
planned buffers:

* Conv/Dense run as tiled GEMM. Weight tiles stream row by row through the
  local staging slot; input rows stream from dram1 (convolutions first
  materialize a block-aligned window buffer); the bias vector is preloaded
  into accumulator slot 0 and folded in with destructive adds before
  writeback rescales rows to storage width.
* MaxPool computes max(a, b) = relu(a - b) + b per tap, negating through a
  constant -identity weight tile (the array is the only multiplier).
* GlobalAvgPool multiplies by a diagonal tile holding the quantized
  reciprocal of the position count, accumulating across positions so the
  single final rescale rounds exactly once.
* ReLU and Add round-trip chunks through the accumulator SIMD lanes.
* Flatten/Reshape emit nothing: they alias buffers.

All arithmetic stays bit-identical to the reference quantized executor as
long as the tiling plan's headroom bounds hold, which plan_tiling enforces.
"""

from __future__ import annotations

import numpy as np

from ..errors import LoweringError
from ..nnir.graph import validate_weights
from ..nnir.qexecute import quantize_weights
from ..nnir.windows import window_table
from ..quant import quantize
from .alloc import NEG_IDENTITY, allocate
from .isa import DataMove, LoadWeights, MatMul, Simd, validate_program
from .program import TcuProgram, TensorIo
from .tiling import plan_tiling


def _dense_row_map(in_layout, array_size):
    """Padded reduction row -> logical weight row (-1 for padding lanes).

    Row v*A + lane of the padded matrix reads lane `lane` of input vector v.
    Vector v = g*positions + p carries channels g*A .. g*A+A-1 of position
    p, and the logical (flattened) input index is p*channels + c.
    """
    p_n, c_n = in_layout.positions, in_layout.channels
    g_n = in_layout.groups(array_size)
    v = np.arange(g_n * p_n)
    g, p = v // p_n, v % p_n
    lane = np.arange(array_size)
    c = g[:, None] * array_size + lane[None, :]
    logical = p[:, None] * c_n + c
    return np.where(c < c_n, logical, -1).reshape(-1)


def _conv_row_map(k_elems, in_channels, array_size):
    """Same, for block-aligned window columns: tile t*G+gi, lane -> tap row.

    The logical im2col row for tap t and channel c is t*in_channels + c.
    """
    g_n = -(-in_channels // array_size)
    ci = np.arange(k_elems * g_n)
    t, gi = ci // g_n, ci % g_n
    lane = np.arange(array_size)
    c = gi[:, None] * array_size + lane[None, :]
    logical = t[:, None] * in_channels + c
    return np.where(c < in_channels, logical, -1).reshape(-1)


def _padded_weights(w2d, row_map, n_pad):
    """[k_pad, n_pad] matrix from logical [K, N] rows via the row map."""
    k_pad = row_map.shape[0]
    out = np.zeros((k_pad, n_pad), dtype=np.int64)
    valid = row_map >= 0
    out[valid, : w2d.shape[1]] = w2d[row_map[valid]]
    return out


def _diag_tile(value, array_size):
    tile = np.zeros((array_size, array_size), dtype=np.int64)
    np.fill_diagonal(tile, value)
    return tile


def _spec_table(in_shape, kernel, stride, padding):
    if len(in_shape) == 2:  # rank-2 tensor: one spatial dim
        kernel, stride = (kernel,), (stride,)
    table, _ = window_table(in_shape[:-1], kernel, stride, padding)
    return table


class _Emitter:
    def __init__(self, g, cfg, plan, mem):
        self.g = g
        self.cfg = cfg
        self.plan = plan
        self.mem = mem
        self.instrs = []
        self.qw = quantize_weights(g, plan.fmt)

    # -- constant image -------------------------------------------------

    def build_constants(self):
        a = self.cfg.array_size
        fmt = self.plan.fmt
        image = np.zeros((self.mem.const_extent, a), dtype=np.int64)
        seg = self.mem.const_segments[NEG_IDENTITY]
        image[seg.base:seg.base + a] = _diag_tile(quantize(-1.0, fmt), a)
        for spec in self.g.layers:
            if spec.name in self.plan.gemm:
                self._pack_gemm_constants(spec, image)
            elif spec.kind == "GlobalAvgPool":
                positions = self.plan.layouts[spec.inputs[0]].positions
                seg = self.mem.const_segments["avg:" + spec.name]
                image[seg.base:seg.base + a] = _diag_tile(
                    quantize(1.0 / positions, fmt), a)
        return image

    def _pack_gemm_constants(self, spec, image):
        a = self.cfg.array_size
        t = self.plan.gemm[spec.name]
        kernel, bias = self.qw[spec.name]
        if spec.kind == "Dense":
            w2d = kernel
            row_map = _dense_row_map(self.plan.layouts[spec.inputs[0]], a)
        else:
            in_ch = kernel.shape[-2]
            w2d = kernel.reshape(-1, kernel.shape[-1])
            row_map = _conv_row_map(w2d.shape[0] // in_ch, in_ch, a)
        padded = _padded_weights(w2d, row_map, t.n_pad(a))
        wseg = self.mem.const_segments["w:" + spec.name]
        for go in range(t.n_tiles):
            for rt in range(t.k_tiles):
                base = wseg.base + (go * t.k_tiles + rt) * a
                image[base:base + a] = padded[rt * a:(rt + 1) * a,
                                              go * a:(go + 1) * a]
        bseg = self.mem.const_segments["b:" + spec.name]
        bias_pad = np.zeros(t.n_pad(a), dtype=np.int64)
        bias_pad[:bias.shape[0]] = bias
        image[bseg.base:bseg.base + t.n_tiles] = bias_pad.reshape(-1, a)

    # -- emission helpers ------------------------------------------------

    def _op(self, instr):
        self.instrs.append(instr)

    def _stream_tile(self, dram0_base):
        """Load an array_size-row weight tile one vector at a time."""
        ws = self.mem.local.weight_stage
        for r in range(self.cfg.array_size):
            self._op(DataMove("dram0_to_local", dram0_base + r, ws, 1))
            self._op(LoadWeights(ws, 1))

    def _copy_dram1(self, src, dst, count, chunk):
        """dram1 -> dram1 through the input staging slot, in chunk pieces."""
        in_base = self.mem.local.in_base
        for off in range(0, count, chunk):
            n = min(chunk, count - off)
            self._op(DataMove("dram1_to_local", src + off, in_base, n))
            self._op(DataMove("local_to_dram1", in_base, dst + off, n))

    def _fill_zeros(self, dst, count):
        """Write the dram1 zero page over [dst, dst+count)."""
        in_base = self.mem.local.in_base
        self._op(DataMove("dram1_to_local", 0, in_base, 1))
        for off in range(count):
            self._op(DataMove("local_to_dram1", in_base, dst + off, 1))

    # -- layer emitters ---------------------------------------------------

    def emit_layer(self, spec):
        if spec.kind in ("Flatten", "Reshape"):
            return
        if spec.kind in ("Conv1D", "Conv2D"):
            self._emit_windows(spec)
            self._emit_gemm(spec)
        elif spec.kind == "Dense":
            self._emit_gemm(spec)
        elif spec.kind in ("MaxPool1D", "MaxPool2D"):
            self._emit_pool(spec)
        elif spec.kind == "GlobalAvgPool":
            self._emit_gap(spec)
        elif spec.kind == "ReLU":
            self._emit_relu(spec)
        elif spec.kind == "Add":
            self._emit_add(spec)
        else:
            raise LoweringError(f"no emitter for layer kind {spec.kind!r}")

    def _emit_windows(self, spec):
        """Materialize the block-aligned window buffer for a convolution."""
        src_name = spec.inputs[0]
        in_shape = self.plan.shapes[src_name]
        in_buf = self.mem.tensor_buffers[src_name]
        scratch = self.mem.scratch[spec.name]
        chunk = self.mem.chunks[spec.name]
        t = self.plan.gemm[spec.name]
        a = self.cfg.array_size
        g_in = self.plan.layouts[src_name].groups(a)
        s_in = self.plan.layouts[src_name].positions
        table = _spec_table(in_shape, spec.attrs["kernel"],
                            spec.attrs["stride"], spec.attrs["padding"])
        m = t.m
        for ci in range(t.k_tiles):
            tap, gi = ci // g_in, ci % g_in
            col = scratch.base + ci * m
            p = 0
            while p < m:
                ip = int(table[p, tap])
                if ip < 0:
                    q = p + 1
                    while q < m and table[q, tap] < 0:
                        q += 1
                    self._fill_zeros(col + p, q - p)
                else:
                    q = p + 1
                    while q < m and table[q, tap] == table[q - 1, tap] + 1:
                        q += 1
                    self._copy_dram1(in_buf.base + gi * s_in + ip,
                                     col + p, q - p, chunk)
                p = q

    def _emit_gemm(self, spec):
        t = self.plan.gemm[spec.name]
        mem, cfg = self.mem, self.cfg
        part = mem.local
        chunk = mem.chunks[spec.name]
        out_buf = mem.tensor_buffers[spec.name]
        if spec.kind == "Dense":
            in_base_dram = mem.tensor_buffers[spec.inputs[0]].base
            row_stride = 1  # one vector per reduction tile
        else:
            in_base_dram = mem.scratch[spec.name].base
            row_stride = t.m
        wseg = mem.const_segments["w:" + spec.name]
        bseg = mem.const_segments["b:" + spec.name]
        for go in range(t.n_tiles):
            self._op(DataMove("dram0_to_local", bseg.base + go,
                              part.weight_stage, 1))
            self._op(DataMove("local_to_acc", part.weight_stage, 0, 1))
            for m0 in range(0, t.m, chunk):
                mc = min(chunk, t.m - m0)
                for rt in range(t.k_tiles):
                    self._stream_tile(wseg.base + (go * t.k_tiles + rt)
                                      * cfg.array_size)
                    self._op(DataMove("dram1_to_local",
                                      in_base_dram + rt * row_stride + m0,
                                      part.in_base, mc))
                    self._op(MatMul(part.in_base, 1, mc, accumulate=rt > 0))
                for r in range(mc):
                    self._op(Simd("add", 0, 1 + r, 1 + r, 1))
                self._op(DataMove("acc_to_local", 1, part.out_base, mc))
                self._op(DataMove("local_to_dram1", part.out_base,
                                  out_buf.base + go * t.m + m0, mc))

    def _emit_pool(self, spec):
        mem = self.mem
        part = mem.local
        src_name = spec.inputs[0]
        in_shape = self.plan.shapes[src_name]
        in_buf = mem.tensor_buffers[src_name]
        out_buf = mem.tensor_buffers[spec.name]
        a = self.cfg.array_size
        s_in = self.plan.layouts[src_name].positions
        groups = self.plan.layouts[src_name].groups(a)
        table = _spec_table(in_shape, spec.attrs["pool"],
                            spec.attrs["stride"], spec.attrs["padding"])
        m_out = table.shape[0]
        self._stream_tile(mem.const_segments[NEG_IDENTITY].base)

        def stage(tap_pos):
            self._op(DataMove("dram1_to_local",
                              in_buf.base + g * s_in + tap_pos,
                              part.in_base, 1))

        for p in range(m_out):
            taps = [int(v) for v in table[p] if v >= 0]
            if not taps:
                raise LoweringError(
                    f"layer {spec.name!r}: window {p} has no valid taps")
            for g in range(groups):
                stage(taps[0])
                self._op(DataMove("local_to_acc", part.in_base, 0, 1))
                for tap_pos in taps[1:]:
                    stage(tap_pos)
                    self._op(DataMove("local_to_acc", part.in_base, 1, 1))
                    self._op(MatMul(part.in_base, 2, 1))   # acc2 = -b
                    self._op(Simd("add", 0, 2, 2, 1))      # acc2 = cur - b
                    self._op(Simd("relu_max0", 2, None, 2, 1))
                    self._op(Simd("add", 2, 1, 1, 1))      # acc1 = max(cur, b)
                    self._op(Simd("move", 1, None, 0, 1))
                self._op(DataMove("acc_to_local", 0, part.out_base, 1))
                self._op(DataMove("local_to_dram1", part.out_base,
                                  out_buf.base + g * m_out + p, 1))

    def _emit_gap(self, spec):
        mem = self.mem
        part = mem.local
        src_name = spec.inputs[0]
        in_buf = mem.tensor_buffers[src_name]
        out_buf = mem.tensor_buffers[spec.name]
        layout = self.plan.layouts[src_name]
        a = self.cfg.array_size
        positions = layout.positions
        chunk = mem.chunks[spec.name]
        self._stream_tile(mem.const_segments["avg:" + spec.name].base)
        for g in range(layout.groups(a)):
            for s0 in range(0, positions, chunk):
                n = min(chunk, positions - s0)
                self._op(DataMove("dram1_to_local",
                                  in_buf.base + g * positions + s0,
                                  part.in_base, n))
                for i in range(n):
                    self._op(MatMul(part.in_base + i, 0, 1,
                                    accumulate=s0 + i > 0))
            self._op(DataMove("acc_to_local", 0, part.out_base, 1))
            self._op(DataMove("local_to_dram1", part.out_base,
                              out_buf.base + g, 1))

    def _emit_relu(self, spec):
        mem = self.mem
        part = mem.local
        in_buf = mem.tensor_buffers[spec.inputs[0]]
        out_buf = mem.tensor_buffers[spec.name]
        total = in_buf.extent
        chunk = mem.chunks[spec.name]
        for off in range(0, total, chunk):
            n = min(chunk, total - off)
            self._op(DataMove("dram1_to_local", in_buf.base + off,
                              part.in_base, n))
            self._op(DataMove("local_to_acc", part.in_base, 0, n))
            self._op(Simd("relu_max0", 0, None, 0, n))
            self._op(DataMove("acc_to_local", 0, part.out_base, n))
            self._op(DataMove("local_to_dram1", part.out_base,
                              out_buf.base + off, n))

    def _emit_add(self, spec):
        mem = self.mem
        part = mem.local
        buf_a = mem.tensor_buffers[spec.inputs[0]]
        buf_b = mem.tensor_buffers[spec.inputs[1]]
        out_buf = mem.tensor_buffers[spec.name]
        total = out_buf.extent
        chunk = mem.chunks[spec.name]
        for off in range(0, total, chunk):
            n = min(chunk, total - off)
            self._op(DataMove("dram1_to_local", buf_a.base + off,
                              part.in_base, n))
            self._op(DataMove("local_to_acc", part.in_base, 0, n))
            self._op(DataMove("dram1_to_local", buf_b.base + off,
                              part.in_base, n))
            self._op(DataMove("local_to_acc", part.in_base, chunk, n))
            self._op(Simd("add", 0, chunk, chunk, n))
            self._op(DataMove("acc_to_local", chunk, part.out_base, n))
            self._op(DataMove("local_to_dram1", part.out_base,
                              out_buf.base + off, n))


def lower(g, cfg, plan=None, mem=None):
    """Compile a graph for an architecture; returns a TcuProgram."""
    if plan is None:
        plan = plan_tiling(g, cfg)
    validate_weights(g, plan.shapes)
    if mem is None:
        mem = allocate(g, cfg, plan)
    emitter = _Emitter(g, cfg, plan, mem)
    constants = emitter.build_constants()
    for spec in g.layers:
        emitter.emit_layer(spec)
    instrs = emitter.instrs
    validate_program(instrs, cfg)

    a = cfg.array_size
    per_op = {}
    macs_executed = 0
    for instr in instrs:
        name = type(instr).__name__
        per_op[name] = per_op.get(name, 0) + 1
        if isinstance(instr, MatMul):
            macs_executed += instr.row_count * a * a
    in_io = TensorIo(shape=tuple(g.input_shape),
                     layout=plan.layouts["input"],
                     base=mem.tensor_buffers["input"].base,
                     extent=mem.tensor_buffers["input"].extent)
    out_buf = mem.tensor_buffers[g.output]
    out_io = TensorIo(shape=tuple(plan.shapes[g.output]),
                      layout=plan.layouts[g.output],
                      base=out_buf.base, extent=out_buf.extent)
    return TcuProgram(
        arch=cfg, fmt=plan.fmt, instructions=instrs, constants=constants,
        input=in_io, output=out_io, model_name=g.name,
        macs_graph=plan.macs_graph, dram1_extent=mem.peaks["dram1"],
        stats={"per_op": per_op, "macs_executed": macs_executed,
               "local_peak": mem.peaks["local"], "acc_peak": mem.peaks["acc"]})
