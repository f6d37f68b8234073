"""Graph attention networks on sparse CSR graphs, in numpy.

Layers, models, training loops and dataset tooling with hand-written
analytic gradients; see the README for a tour.
"""

from .data import SyntheticSpec, generate_synthetic, import_text, load_bundle, save_bundle
from .graph import CsrGraph, GraphBundle, MultiGraphBatch, disjoint_union, from_edge_list
from .layer import GatLayerConfig, attention_coefficients, init_layer_params
from .layer import backward as layer_backward
from .layer import forward as layer_forward
from .metrics import MetricReport, masked_accuracy, micro_f1
from .model import (
    GatModel,
    get_preset,
    load_checkpoint,
    model_backward,
    model_forward,
    save_checkpoint,
    sigmoid_bce,
    softmax_cross_entropy,
)
from .numcheck import GradCheckReport, gradcheck
from .train import TrainConfig, evaluate, evaluate_graphs, train_inductive, train_transductive

__version__ = "0.1.0"

__all__ = [
    "CsrGraph",
    "GatLayerConfig",
    "GatModel",
    "GradCheckReport",
    "GraphBundle",
    "MetricReport",
    "MultiGraphBatch",
    "SyntheticSpec",
    "TrainConfig",
    "attention_coefficients",
    "disjoint_union",
    "evaluate",
    "evaluate_graphs",
    "from_edge_list",
    "generate_synthetic",
    "get_preset",
    "gradcheck",
    "import_text",
    "init_layer_params",
    "layer_backward",
    "layer_forward",
    "load_bundle",
    "load_checkpoint",
    "masked_accuracy",
    "micro_f1",
    "model_backward",
    "model_forward",
    "save_bundle",
    "save_checkpoint",
    "sigmoid_bce",
    "softmax_cross_entropy",
    "train_inductive",
    "train_transductive",
]
