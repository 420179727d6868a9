"""Functional and cycle-cost simulator for compiled programs.

The machine state is four vector memories plus the weight tile. Stepping an
instruction mutates state and returns its cycle cost:

    NoOp          1
    LoadWeights   row_count + 1       (drain + shift)
    MatMul        row_count + array_size  (pipeline fill + stream)
    DataMove      vec_count * dram_latency_factor when either end is a DRAM
                  region, else vec_count
    SIMD          vec_count

DRAM regions are sized to the program footprint rather than the configured
depths, so a stray address past the planned extent faults loudly instead of
reading silent zeros. The report splits cycles into transfer and compute and
quotes an overlap lower bound (max of the two) next to the sequential total.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .compiler.isa import DataMove, LoadWeights, MatMul, NoOp, Simd
from .compiler.layout import pack_tensor, unpack_tensor
from .errors import ShapeError, SimulationError
from .quant import QTensor, quantize_array, rescale_array, widen_array

_DRAM_DIRECTIONS = ("dram0_to_local", "dram1_to_local", "local_to_dram1")


def instruction_cycles(instr, cfg):
    """Cycle cost of one instruction under an architecture."""
    if isinstance(instr, NoOp):
        return 1
    if isinstance(instr, LoadWeights):
        return instr.row_count + 1
    if isinstance(instr, MatMul):
        return instr.row_count + cfg.array_size
    if isinstance(instr, DataMove):
        if instr.direction in _DRAM_DIRECTIONS:
            return instr.vec_count * cfg.dram_latency_factor
        return instr.vec_count
    if isinstance(instr, Simd):
        return instr.vec_count
    raise SimulationError(None, f"unknown instruction {type(instr).__name__}")


class TcuState:
    """Mutable machine state; execute() steps one instruction."""

    def __init__(self, cfg, fmt, constants, dram1_extent):
        a = cfg.array_size
        self.cfg = cfg
        self.fmt = fmt
        self.dram0 = np.array(constants, dtype=np.int64).reshape(-1, a)
        self.dram1 = np.zeros((dram1_extent, a), dtype=np.int64)
        self.local = np.zeros((cfg.local_depth, a), dtype=np.int64)
        self.acc = np.zeros((cfg.acc_depth, a), dtype=np.int64)
        self.tile = np.zeros((a, a), dtype=np.int64)
        self._zero_tile = np.zeros((a, a), dtype=np.int64)
        self.tile_loaded = False

    def _region(self, name):
        return {"dram0": self.dram0, "dram1": self.dram1,
                "local": self.local, "acc": self.acc}[name]

    def _slice(self, name, base, count, pc):
        mem = self._region(name)
        if base < 0 or base + count > mem.shape[0]:
            raise SimulationError(
                pc, f"{name} access [{base}, +{count}) outside the "
                f"provisioned extent {mem.shape[0]}")
        return mem[base:base + count]

    def execute(self, instr, pc=0):
        """Apply one instruction; returns its cycle cost."""
        if isinstance(instr, NoOp):
            pass
        elif isinstance(instr, LoadWeights):
            vecs = self._slice("local", instr.local_addr, instr.row_count, pc)
            a = self.cfg.array_size
            rc = instr.row_count
            if rc > a:
                raise SimulationError(pc, f"LoadWeights row_count {rc} "
                                      f"exceeds array size {a}")
            shifted = np.roll(self.tile, -rc, axis=0)
            shifted[a - rc:] = vecs
            self.tile = shifted
            self.tile_loaded = True
        elif isinstance(instr, MatMul):
            if not (instr.zero_weights or self.tile_loaded):
                raise SimulationError(pc, "MatMul with no weights loaded")
            self._slice("local", instr.local_in_addr, instr.row_count, pc)
            self._slice("acc", instr.acc_addr, instr.row_count, pc)
            tile = self._zero_tile if instr.zero_weights else self.tile
            kernels.matmul_stream(
                tile, self.local, instr.local_in_addr, self.acc,
                instr.acc_addr, instr.row_count, instr.accumulate,
                self.fmt.acc_min, self.fmt.acc_max)
        elif isinstance(instr, DataMove):
            self._data_move(instr, pc)
        elif isinstance(instr, Simd):
            self._simd(instr, pc)
        else:
            raise SimulationError(pc, f"unknown instruction "
                                  f"{type(instr).__name__}")
        return instruction_cycles(instr, self.cfg)

    def _data_move(self, instr, pc):
        n = instr.vec_count
        src_name, _, dst_name = instr.direction.partition("_to_")
        src = self._slice(src_name, instr.src_addr, n, pc)
        dst = self._slice(dst_name, instr.dst_addr, n, pc)
        if instr.direction == "acc_to_local":
            dst[:] = rescale_array(src, self.fmt)
        elif instr.direction == "local_to_acc":
            dst[:] = widen_array(src, self.fmt)
        else:
            dst[:] = src

    def _simd(self, instr, pc):
        n = instr.vec_count
        src = self._slice("acc", instr.acc_src_a, n, pc).copy()
        dst = self._slice("acc", instr.acc_dst, n, pc)
        if instr.op == "relu_max0":
            np.maximum(src, 0, out=dst)
        elif instr.op == "add":
            if instr.acc_src_b != instr.acc_dst:
                raise SimulationError(pc, "SIMD add needs acc_src_b == acc_dst")
            summed = src + dst
            np.clip(summed, self.fmt.acc_min, self.fmt.acc_max, out=dst)
        elif instr.op == "move":
            dst[:] = src
        else:
            raise SimulationError(pc, f"unknown SIMD op {instr.op!r}")


@dataclass
class SimReport:
    model_name: str
    instruction_count: int
    total_cycles: int
    transfer_cycles: int
    compute_cycles: int
    overlap_cycles: int      # lower bound with perfect transfer/compute overlap
    per_class: dict          # opcode class -> {"count", "cycles"}
    macs_graph: int
    macs_executed: int
    clock_mhz: int

    @property
    def latency_ms(self):
        return self.total_cycles / (self.clock_mhz * 1000.0)

    @property
    def throughput_gops(self):
        if self.total_cycles == 0:
            return 0.0
        seconds = self.total_cycles / (self.clock_mhz * 1e6)
        return 2.0 * self.macs_graph / seconds / 1e9

    @property
    def efficiency(self):
        if self.macs_executed == 0:
            return 0.0
        return self.macs_graph / self.macs_executed

    def as_dict(self):
        return {
            "model": self.model_name,
            "instruction_count": self.instruction_count,
            "total_cycles": self.total_cycles,
            "transfer_cycles": self.transfer_cycles,
            "compute_cycles": self.compute_cycles,
            "overlap_cycles": self.overlap_cycles,
            "per_class": self.per_class,
            "macs_graph": self.macs_graph,
            "macs_executed": self.macs_executed,
            "clock_mhz": self.clock_mhz,
            "latency_ms": self.latency_ms,
            "throughput_gops": self.throughput_gops,
            "efficiency": self.efficiency,
        }

    def format_text(self):
        lines = [
            f"model               {self.model_name}",
            f"instructions        {self.instruction_count}",
            f"total cycles        {self.total_cycles}",
            f"  transfer          {self.transfer_cycles}",
            f"  compute           {self.compute_cycles}",
            f"  overlap bound     {self.overlap_cycles}",
            f"latency             {self.latency_ms:.6f} ms @ "
            f"{self.clock_mhz} MHz",
            f"throughput          {self.throughput_gops:.4f} GOP/s",
            f"MACs (graph/run)    {self.macs_graph} / {self.macs_executed}",
            f"array efficiency    {self.efficiency:.4f}",
        ]
        for name in ("LoadWeights", "MatMul", "DataMove", "Simd", "NoOp"):
            entry = self.per_class[name]
            lines.append(f"{name:<14}      {entry['count']:>8} ops  "
                         f"{entry['cycles']:>10} cycles")
        return "\n".join(lines)


_CLASS_NAMES = ("NoOp", "LoadWeights", "MatMul", "DataMove", "Simd")


def run(prog, x):
    """Execute a compiled program on one input; -> (QTensor, SimReport).

    Accepts a float array shaped like the program input, or a QTensor
    already in the program's format.
    """
    fmt = prog.fmt
    if isinstance(x, QTensor):
        if x.fmt != fmt:
            raise ShapeError(f"input format {x.fmt} != program format {fmt}")
        raw = x.raw
    else:
        raw = quantize_array(np.asarray(x, dtype=np.float64), fmt)
    if tuple(raw.shape) != tuple(prog.input.shape):
        raise ShapeError(f"input shape {tuple(raw.shape)} != expected "
                         f"{tuple(prog.input.shape)}")
    a = prog.arch.array_size
    vectors = pack_tensor(raw, prog.input.layout, a)
    if vectors.shape[0] != prog.input.extent:
        raise ShapeError(f"packed input is {vectors.shape[0]} vectors, "
                         f"program expects {prog.input.extent}")

    state = TcuState(prog.arch, fmt, prog.constants, prog.dram1_extent)
    state.dram1[prog.input.base:prog.input.base + prog.input.extent] = vectors

    per_class = {name: {"count": 0, "cycles": 0} for name in _CLASS_NAMES}
    total = 0
    transfer = 0
    macs_executed = 0
    for pc, instr in enumerate(prog.instructions):
        cost = state.execute(instr, pc)
        entry = per_class[type(instr).__name__]
        entry["count"] += 1
        entry["cycles"] += cost
        total += cost
        if isinstance(instr, DataMove):
            transfer += cost
        elif isinstance(instr, MatMul):
            macs_executed += instr.row_count * a * a

    out_vecs = state.dram1[prog.output.base:prog.output.base
                           + prog.output.extent]
    out_raw = unpack_tensor(out_vecs, prog.output.layout, a)
    out = QTensor(shape=tuple(prog.output.shape),
                  raw=np.ascontiguousarray(
                      out_raw.reshape(prog.output.shape)),
                  fmt=fmt)
    compute = total - transfer
    report = SimReport(
        model_name=prog.model_name, instruction_count=len(prog.instructions),
        total_cycles=total, transfer_cycles=transfer, compute_cycles=compute,
        overlap_cycles=max(transfer, compute), per_class=per_class,
        macs_graph=prog.macs_graph, macs_executed=macs_executed,
        clock_mhz=prog.arch.clock_mhz)
    return out, report
