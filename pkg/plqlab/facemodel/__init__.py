"""Embedding models, the toy-16 reference architecture, weight files and training."""

from .model import (
    EmbeddingModel,
    ForwardTrace,
    activation_pattern,
    build_reference,
    draw_dropout_mask,
    embed,
    stochastic_embed,
    trace,
)
from .synthetic import FaceSample, SyntheticFaceSpec, make_dataset, render_face
from .trainer import TrainingResult, evaluate_accuracy, train_toy
from .weights import load, save

__all__ = [
    "EmbeddingModel",
    "FaceSample",
    "ForwardTrace",
    "SyntheticFaceSpec",
    "TrainingResult",
    "activation_pattern",
    "build_reference",
    "draw_dropout_mask",
    "embed",
    "evaluate_accuracy",
    "load",
    "make_dataset",
    "render_face",
    "save",
    "stochastic_embed",
    "trace",
    "train_toy",
]
