"""Compiled artifact bundle: manifest + program stream + constants blob.

Three sibling files share a stem:

    <stem>.tmodel   text manifest: model name, architecture, io placement,
                    stream/blob sizes, CRC-32 (hex) of program||constants
    <stem>.tprog    16-byte instruction records, in order
    <stem>.tdata    constants image, little-endian two's-complement raw
                    values at storage width, vector-major

Emission is deterministic: identical inputs produce identical bytes (no
timestamps, fixed key order), so recompiles diff clean.
"""

from __future__ import annotations

import os
import zlib
from dataclasses import fields as dataclass_fields

import numpy as np

from ..arch import ArchConfig, require_valid
from ..errors import BundleError
from ..quant import pack_raw, unpack_raw
from .isa import decode_program, encode_program
from .layout import PhysLayout
from .program import TcuProgram, TensorIo
from .tiling import compile_format

_MAGIC = "# tcu artifact manifest v1"


def _arch_items(cfg):
    return [(f.name, getattr(cfg, f.name)) for f in dataclass_fields(cfg)]


def _io_lines(prefix, io):
    return [
        f"{prefix}.shape = {' '.join(str(d) for d in io.shape)}",
        f"{prefix}.layout = {io.layout.positions} {io.layout.channels}",
        f"{prefix}.base = {io.base}",
        f"{prefix}.extent = {io.extent}",
    ]


def emit(prog, stem):
    """Write the three bundle files for a program; returns their paths."""
    program_bytes = encode_program(prog.instructions)
    constants_bytes = pack_raw(prog.constants, prog.fmt)
    crc = zlib.crc32(program_bytes + constants_bytes) & 0xFFFFFFFF
    lines = [_MAGIC,
             f"model = {prog.model_name}",
             f"checksum = {crc:08x}",
             f"instructions = {len(prog.instructions)}",
             f"constants = {prog.constants.shape[0]}",
             f"macs_graph = {prog.macs_graph}",
             f"dram1_extent = {prog.dram1_extent}"]
    lines += [f"arch.{k} = {v}" for k, v in _arch_items(prog.arch)]
    lines += _io_lines("input", prog.input)
    lines += _io_lines("output", prog.output)
    paths = {"manifest": stem + ".tmodel",
             "program": stem + ".tprog",
             "constants": stem + ".tdata"}
    with open(paths["manifest"], "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    with open(paths["program"], "wb") as fh:
        fh.write(program_bytes)
    with open(paths["constants"], "wb") as fh:
        fh.write(constants_bytes)
    return paths


def _parse_manifest(path):
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    lines = text.splitlines()
    if not lines or lines[0].strip() != _MAGIC:
        raise BundleError(f"{path}: not an artifact manifest "
                          f"(missing {_MAGIC!r} header)")
    pairs = {}
    for lineno, line in enumerate(lines[1:], start=2):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise BundleError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in body.split("=", 1))
        if key in pairs:
            raise BundleError(f"{path}:{lineno}: duplicate key {key!r}")
        pairs[key] = (value, lineno)
    return pairs


def _take(pairs, key, path, parse=int):
    if key not in pairs:
        raise BundleError(f"{path}: manifest is missing key {key!r}")
    value, lineno = pairs.pop(key)
    try:
        return parse(value)
    except ValueError:
        raise BundleError(f"{path}:{lineno}: bad value for {key}: {value!r}")


def _int_list(value):
    return tuple(int(part) for part in value.split())


def _take_io(pairs, prefix, path):
    shape = _take(pairs, f"{prefix}.shape", path, _int_list)
    layout = _take(pairs, f"{prefix}.layout", path, _int_list)
    if len(layout) != 2:
        raise BundleError(f"{path}: {prefix}.layout needs two integers")
    return TensorIo(shape=shape, layout=PhysLayout(*layout),
                    base=_take(pairs, f"{prefix}.base", path),
                    extent=_take(pairs, f"{prefix}.extent", path))


def load_bundle(manifest_path, expected_arch=None):
    """Read a bundle back into a TcuProgram, verifying the checksum.

    expected_arch, when given, must match the bundle's architecture exactly;
    a program compiled for one machine is meaningless on another.
    """
    pairs = _parse_manifest(manifest_path)
    path = manifest_path
    model = _take(pairs, "model", path, str)
    checksum = _take(pairs, "checksum", path, lambda v: int(v, 16))
    n_instr = _take(pairs, "instructions", path)
    n_const = _take(pairs, "constants", path)
    macs_graph = _take(pairs, "macs_graph", path)
    dram1_extent = _take(pairs, "dram1_extent", path)
    arch_values = {f.name: _take(pairs, f"arch.{f.name}", path)
                   for f in dataclass_fields(ArchConfig)}
    cfg = ArchConfig(**arch_values)
    require_valid(cfg)
    in_io = _take_io(pairs, "input", path)
    out_io = _take_io(pairs, "output", path)
    if pairs:
        raise BundleError(
            f"{path}: unknown manifest keys: {', '.join(sorted(pairs))}")

    if expected_arch is not None and expected_arch != cfg:
        diffs = [f.name for f in dataclass_fields(ArchConfig)
                 if getattr(expected_arch, f.name) != getattr(cfg, f.name)]
        raise BundleError(
            f"{path}: bundle was compiled for a different architecture "
            f"(differs in: {', '.join(diffs)})")

    stem = os.path.splitext(manifest_path)[0]
    with open(stem + ".tprog", "rb") as fh:
        program_bytes = fh.read()
    with open(stem + ".tdata", "rb") as fh:
        constants_bytes = fh.read()
    crc = zlib.crc32(program_bytes + constants_bytes) & 0xFFFFFFFF
    if crc != checksum:
        raise BundleError(
            f"{path}: checksum mismatch (manifest {checksum:08x}, "
            f"files {crc:08x}); the bundle is corrupt")

    fmt = compile_format(cfg)
    instructions = decode_program(program_bytes)
    if len(instructions) != n_instr:
        raise BundleError(
            f"{path}: manifest promises {n_instr} instructions, program "
            f"stream holds {len(instructions)}")
    expect = n_const * cfg.array_size * fmt.storage_bytes
    if len(constants_bytes) != expect:
        raise BundleError(
            f"{path}: constants blob is {len(constants_bytes)} bytes, "
            f"expected {expect}")
    constants = unpack_raw(constants_bytes, n_const * cfg.array_size,
                           fmt).reshape(n_const, cfg.array_size)
    return TcuProgram(
        arch=cfg, fmt=fmt, instructions=instructions,
        constants=np.ascontiguousarray(constants), input=in_io,
        output=out_io, model_name=model, macs_graph=macs_graph,
        dram1_extent=dram1_extent)
