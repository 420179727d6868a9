"""Exception types shared across the toolchain.

Every error the package raises on bad input derives from TcuflowError so the
CLI can map domain failures to a single exit code.
"""


class TcuflowError(Exception):
    """Base class for all toolchain errors."""


class ArchConfigError(TcuflowError):
    """Invalid architecture configuration or resource budget."""


class FormatError(TcuflowError):
    """Malformed on-disk artifact (model manifest, weight blob, config file)."""


class ShapeError(TcuflowError):
    """Graph validation or shape inference failure."""


class QuantError(TcuflowError):
    """Invalid fixed-point format or quantization request."""


class LoweringError(TcuflowError):
    """Graph cannot be mapped onto the target (unsupported layer, layout)."""


class CapacityError(LoweringError):
    """A memory region is too small for the plan."""

    def __init__(self, region, detail):
        self.region = region
        super().__init__(f"{region}: {detail}")


class SimulationError(TcuflowError):
    """Instruction stream fault detected while stepping the simulator."""

    def __init__(self, pc, message):
        self.pc = pc
        super().__init__(f"pc={pc}: {message}")


class BundleError(TcuflowError):
    """Artifact bundle is corrupt or incompatible with the host architecture."""


class DataError(TcuflowError):
    """Malformed or out-of-contract beat data."""
