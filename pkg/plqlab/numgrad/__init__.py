"""Dense float64 layers with forward and backward passes."""

from .gradcheck import numeric_gradient, relative_error, top_k_indices
from .layers import (
    Layer,
    LayerKind,
    ParamGrads,
    avg_pool2x2,
    backward_input,
    backward_weights,
    conv2d,
    dropout_site,
    flatten,
    forward,
    fully_connected,
    output_shape,
    relu,
)

__all__ = [
    "Layer",
    "LayerKind",
    "ParamGrads",
    "avg_pool2x2",
    "backward_input",
    "backward_weights",
    "conv2d",
    "dropout_site",
    "flatten",
    "forward",
    "fully_connected",
    "numeric_gradient",
    "output_shape",
    "relative_error",
    "relu",
    "top_k_indices",
]
