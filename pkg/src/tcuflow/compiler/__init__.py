"""Graph-to-instruction compiler."""

from .alloc import Buffer, MemoryPlan, allocate, local_partition
from .bundle import emit, load_bundle
from .isa import (DataMove, LoadWeights, MatMul, NoOp, Simd,
                  decode_instruction, decode_program, encode_instruction,
                  encode_program, validate_instruction, validate_program)
from .layout import PhysLayout, canonical_layout, pack_tensor, unpack_tensor
from .lower import lower
from .program import TcuProgram, TensorIo
from .tiling import GemmTiling, TilingPlan, compile_format, plan_tiling

__all__ = [
    "Buffer", "MemoryPlan", "allocate", "local_partition",
    "emit", "load_bundle",
    "DataMove", "LoadWeights", "MatMul", "NoOp", "Simd",
    "decode_instruction", "decode_program", "encode_instruction",
    "encode_program", "validate_instruction", "validate_program",
    "PhysLayout", "canonical_layout", "pack_tensor", "unpack_tensor",
    "lower", "TcuProgram", "TensorIo",
    "GemmTiling", "TilingPlan", "compile_format", "plan_tiling",
]
