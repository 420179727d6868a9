"""Instruction set: in-memory form, binary encoding, static validation.

Five opcodes drive the machine. Records are fixed 16-byte little-endian:
opcode (1 byte), flags (1 byte), three 4-byte operand fields, 2 reserved
zero bytes. SIMD add is destructive (acc_src_b must equal acc_dst) so that
every instruction fits the three operand fields; see docs/formats.md.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from ..errors import FormatError, LoweringError

RECORD_SIZE = 16
_RECORD = struct.Struct("<BBIII2s")

OP_NOOP = 0
OP_LOAD_WEIGHTS = 1
OP_MATMUL = 2
OP_DATA_MOVE = 3
OP_SIMD = 4

DIRECTIONS = ("dram0_to_local", "dram1_to_local", "local_to_dram1",
              "acc_to_local", "local_to_acc")
SIMD_OPS = ("relu_max0", "add", "move")


@dataclass(frozen=True)
class NoOp:
    pass


@dataclass(frozen=True)
class LoadWeights:
    """Shift row_count vectors from local into the weight tile.

    The tile is a row shift register: each new vector enters at the bottom
    row and pushes earlier rows up, so streaming rows 0..n-1 one vector at a
    time leaves row k holding the k-th streamed vector.
    """

    local_addr: int
    row_count: int


@dataclass(frozen=True)
class MatMul:
    """Stream row_count local vectors through the loaded weight tile.

    acc[acc_addr + r] (+)= tile.T @ local[local_in_addr + r], with a
    saturating multiply-accumulate per step. zero_weights streams through an
    all-zero tile without touching the loaded one.
    """

    local_in_addr: int
    acc_addr: int
    row_count: int
    accumulate: bool = False
    zero_weights: bool = False


@dataclass(frozen=True)
class DataMove:
    """Copy vec_count vectors between memories.

    acc_to_local rescales accumulator values to storage width (round half to
    even, saturate); local_to_acc widens by frac_bits. The other directions
    copy raw storage values unchanged.
    """

    direction: str
    src_addr: int
    dst_addr: int
    vec_count: int


@dataclass(frozen=True)
class Simd:
    """Lane-wise op over vec_count consecutive accumulator vectors.

    add is destructive: acc_src_b must equal acc_dst (dst += src_a,
    saturating at accumulator width). relu_max0 and move take acc_src_b=None.
    """

    op: str
    acc_src_a: int
    acc_src_b: int | None
    acc_dst: int
    vec_count: int


def _check(cond, message):
    if not cond:
        raise LoweringError(message)


def validate_instruction(instr, cfg):
    """Static bounds/shape checks against an architecture."""
    a = cfg.array_size
    if isinstance(instr, NoOp):
        return
    if isinstance(instr, LoadWeights):
        _check(1 <= instr.row_count <= a,
               f"LoadWeights row_count must be in 1..{a}, got {instr.row_count}")
        _check(0 <= instr.local_addr
               and instr.local_addr + instr.row_count <= cfg.local_depth,
               f"LoadWeights local range [{instr.local_addr}, "
               f"+{instr.row_count}) exceeds local_depth {cfg.local_depth}")
        return
    if isinstance(instr, MatMul):
        _check(instr.row_count >= 1, "MatMul row_count must be positive")
        _check(0 <= instr.local_in_addr
               and instr.local_in_addr + instr.row_count <= cfg.local_depth,
               f"MatMul local range [{instr.local_in_addr}, "
               f"+{instr.row_count}) exceeds local_depth {cfg.local_depth}")
        _check(0 <= instr.acc_addr
               and instr.acc_addr + instr.row_count <= cfg.acc_depth,
               f"MatMul acc range [{instr.acc_addr}, +{instr.row_count}) "
               f"exceeds acc_depth {cfg.acc_depth}")
        return
    if isinstance(instr, DataMove):
        _check(instr.direction in DIRECTIONS,
               f"unknown DataMove direction {instr.direction!r}")
        _check(instr.vec_count >= 1, "DataMove vec_count must be positive")
        depth = {"dram0_to_local": (cfg.dram0_depth, cfg.local_depth),
                 "dram1_to_local": (cfg.dram1_depth, cfg.local_depth),
                 "local_to_dram1": (cfg.local_depth, cfg.dram1_depth),
                 "acc_to_local": (cfg.acc_depth, cfg.local_depth),
                 "local_to_acc": (cfg.local_depth, cfg.acc_depth)}
        src_depth, dst_depth = depth[instr.direction]
        _check(0 <= instr.src_addr and instr.src_addr + instr.vec_count <= src_depth,
               f"DataMove src range [{instr.src_addr}, +{instr.vec_count}) "
               f"exceeds {instr.direction} source depth {src_depth}")
        _check(0 <= instr.dst_addr and instr.dst_addr + instr.vec_count <= dst_depth,
               f"DataMove dst range [{instr.dst_addr}, +{instr.vec_count}) "
               f"exceeds {instr.direction} target depth {dst_depth}")
        return
    if isinstance(instr, Simd):
        _check(instr.op in SIMD_OPS, f"unknown SIMD op {instr.op!r}")
        _check(instr.vec_count >= 1, "SIMD vec_count must be positive")
        for addr, label in ((instr.acc_src_a, "src_a"), (instr.acc_dst, "dst")):
            _check(0 <= addr and addr + instr.vec_count <= cfg.acc_depth,
                   f"SIMD {label} range [{addr}, +{instr.vec_count}) "
                   f"exceeds acc_depth {cfg.acc_depth}")
        if instr.op == "add":
            _check(instr.acc_src_b == instr.acc_dst,
                   "SIMD add is destructive: acc_src_b must equal acc_dst")
        else:
            _check(instr.acc_src_b is None,
                   f"SIMD {instr.op} takes no second source")
        return
    raise LoweringError(f"unknown instruction type {type(instr).__name__}")


def validate_program(instructions, cfg):
    """All static checks plus the weights-before-matmul rule."""
    loaded = False
    for index, instr in enumerate(instructions):
        try:
            validate_instruction(instr, cfg)
        except LoweringError as exc:
            raise LoweringError(f"instruction {index}: {exc}") from exc
        if isinstance(instr, LoadWeights):
            loaded = True
        elif isinstance(instr, MatMul) and not instr.zero_weights and not loaded:
            raise LoweringError(
                f"instruction {index}: MatMul before any LoadWeights "
                f"(use zero_weights to stream through a cleared tile)")


def encode_instruction(instr):
    """One instruction -> 16 bytes."""
    if isinstance(instr, NoOp):
        return _RECORD.pack(OP_NOOP, 0, 0, 0, 0, b"\x00\x00")
    if isinstance(instr, LoadWeights):
        return _RECORD.pack(OP_LOAD_WEIGHTS, 0, instr.local_addr,
                            instr.row_count, 0, b"\x00\x00")
    if isinstance(instr, MatMul):
        flags = (1 if instr.accumulate else 0) | (2 if instr.zero_weights else 0)
        return _RECORD.pack(OP_MATMUL, flags, instr.local_in_addr,
                            instr.acc_addr, instr.row_count, b"\x00\x00")
    if isinstance(instr, DataMove):
        return _RECORD.pack(OP_DATA_MOVE, DIRECTIONS.index(instr.direction),
                            instr.src_addr, instr.dst_addr, instr.vec_count,
                            b"\x00\x00")
    if isinstance(instr, Simd):
        if instr.op == "add" and instr.acc_src_b != instr.acc_dst:
            raise FormatError("SIMD add must have acc_src_b == acc_dst")
        return _RECORD.pack(OP_SIMD, SIMD_OPS.index(instr.op),
                            instr.acc_src_a, instr.acc_dst, instr.vec_count,
                            b"\x00\x00")
    raise FormatError(f"cannot encode {type(instr).__name__}")


def decode_instruction(record, index=0):
    """16 bytes -> one instruction."""
    if len(record) != RECORD_SIZE:
        raise FormatError(f"instruction {index}: record must be "
                          f"{RECORD_SIZE} bytes, got {len(record)}")
    opcode, flags, f0, f1, f2, _ = _RECORD.unpack(record)
    if opcode == OP_NOOP:
        return NoOp()
    if opcode == OP_LOAD_WEIGHTS:
        return LoadWeights(local_addr=f0, row_count=f1)
    if opcode == OP_MATMUL:
        if flags & ~3:
            raise FormatError(f"instruction {index}: bad MatMul flags {flags:#x}")
        return MatMul(local_in_addr=f0, acc_addr=f1, row_count=f2,
                      accumulate=bool(flags & 1), zero_weights=bool(flags & 2))
    if opcode == OP_DATA_MOVE:
        if flags >= len(DIRECTIONS):
            raise FormatError(f"instruction {index}: bad direction {flags}")
        return DataMove(direction=DIRECTIONS[flags], src_addr=f0,
                        dst_addr=f1, vec_count=f2)
    if opcode == OP_SIMD:
        if flags >= len(SIMD_OPS):
            raise FormatError(f"instruction {index}: bad SIMD op {flags}")
        op = SIMD_OPS[flags]
        src_b = f1 if op == "add" else None
        return Simd(op=op, acc_src_a=f0, acc_src_b=src_b, acc_dst=f1,
                    vec_count=f2)
    raise FormatError(f"instruction {index}: unknown opcode {opcode}")


def encode_program(instructions):
    return b"".join(encode_instruction(i) for i in instructions)


def decode_program(blob):
    if len(blob) % RECORD_SIZE:
        raise FormatError(
            f"program stream length {len(blob)} is not a multiple of "
            f"{RECORD_SIZE}")
    return [decode_instruction(blob[off:off + RECORD_SIZE], off // RECORD_SIZE)
            for off in range(0, len(blob), RECORD_SIZE)]
