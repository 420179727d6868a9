"""Compiled program artifact: instructions plus everything a run needs."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..arch import ArchConfig
from ..quant import FixedPointFormat
from .layout import PhysLayout


@dataclass(frozen=True)
class TensorIo:
    """Where a program expects its input / leaves its output in dram1."""

    shape: tuple
    layout: PhysLayout
    base: int
    extent: int


@dataclass
class TcuProgram:
    arch: ArchConfig
    fmt: FixedPointFormat
    instructions: list
    constants: np.ndarray      # dram0 image, [extent, array_size] int64
    input: TensorIo
    output: TensorIo
    model_name: str
    macs_graph: int
    dram1_extent: int          # high-water mark a run must provision

    stats: dict = field(default_factory=dict)  # compile-time counters

    def __len__(self):
        return len(self.instructions)
