"""Layer-graph IR: types, shape inference, costs, executors, persistence."""

from .costs import count_macs, layer_macs
from .execute import execute_float
from .graph import (INPUT_NAME, KINDS, WEIGHTED_KINDS, LayerSpec, ModelGraph,
                    validate_graph, validate_weights, weight_shapes)
from .modelio import load_model, save_model
from .qexecute import execute_quant, quantize_weights
from .shapes import infer_shapes, pad_before, spatial_positions, window_out

__all__ = [
    "INPUT_NAME", "KINDS", "WEIGHTED_KINDS", "LayerSpec", "ModelGraph",
    "validate_graph", "validate_weights", "weight_shapes", "infer_shapes",
    "pad_before", "spatial_positions", "window_out", "count_macs",
    "layer_macs", "execute_float", "execute_quant", "quantize_weights",
    "load_model", "save_model",
]
