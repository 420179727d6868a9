"""The bundled beat-classifier topology.

A small residual 1-D conv net sized for the default 8-wide array: every
layer keeps 8 channels, so channel groups stay single-vector and the array
padding overhead comes only from the 1-channel input and the 5-logit head.

    input (187, 1)
      -> Conv1D k5 x8 valid -> ReLU -> MaxPool1D 2
      -> Conv1D k3 x8 same  -> ReLU
      -> Conv1D k3 x8 same  -> Add(skip) -> ReLU -> MaxPool1D 2
      -> Flatten (360) -> Dense 64 -> ReLU -> Dense 5

65,624 logical MACs. Shipped weights live in models/demo.model alongside
the 500-beat sample CSV; scripts/make_demo_assets.py regenerates both.
"""

from __future__ import annotations

from .nnir.graph import LayerSpec, ModelGraph

DEMO_NAME = "ecg-demo"


def build_demo_graph():
    """The demo topology with an empty weight store."""
    layers = [
        LayerSpec("c1", "Conv1D", ("input",),
                  {"kernel": 5, "channels": 8, "stride": 1,
                   "padding": "valid"}),
        LayerSpec("c1_relu", "ReLU", ("c1",)),
        LayerSpec("p1", "MaxPool1D", ("c1_relu",),
                  {"pool": 2, "stride": 2, "padding": "valid"}),
        LayerSpec("c2", "Conv1D", ("p1",),
                  {"kernel": 3, "channels": 8, "stride": 1,
                   "padding": "same"}),
        LayerSpec("c2_relu", "ReLU", ("c2",)),
        LayerSpec("c3", "Conv1D", ("c2_relu",),
                  {"kernel": 3, "channels": 8, "stride": 1,
                   "padding": "same"}),
        LayerSpec("skip", "Add", ("p1", "c3")),
        LayerSpec("skip_relu", "ReLU", ("skip",)),
        LayerSpec("p2", "MaxPool1D", ("skip_relu",),
                  {"pool": 2, "stride": 2, "padding": "valid"}),
        LayerSpec("flat", "Flatten", ("p2",)),
        LayerSpec("d1", "Dense", ("flat",), {"units": 64}),
        LayerSpec("d1_relu", "ReLU", ("d1",)),
        LayerSpec("logits", "Dense", ("d1_relu",), {"units": 5}),
    ]
    return ModelGraph(DEMO_NAME, (187, 1), layers, "logits")
