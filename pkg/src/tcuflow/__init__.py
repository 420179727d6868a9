"""tcuflow: compile small neural nets onto a simulated tensor compute unit.

The package covers the full desk-scale flow: architecture description and
resource estimation, a tiny layer-graph IR with float and fixed-point
reference executors, a compiler that lowers graphs to a systolic-array
instruction stream, a functional cycle-counting simulator, and a beat
classification pipeline that exercises all of it.
"""

from .errors import TcuflowError

__version__ = "0.1.0"

__all__ = ["TcuflowError", "__version__"]
