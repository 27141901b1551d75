"""Toy trainer: softmax cross-entropy through an auxiliary classifier.

The classifier sits on top of the embedding during training and is
dropped from the returned model. The dropout site is active while
training, with masks drawn from seeded streams.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import structlog

from ..constants import (
    ADAM_BETAS,
    ADAM_EPS,
    DEFAULT_DROPOUT,
    TOY_BATCH_SIZE,
    TOY_EPOCHS,
    TOY_LEARNING_RATE,
    TOY_LR_FLOOR,
)
from ..errors import ConfigError, DatasetError
from ..numgrad import Layer, LayerKind, backward_input, backward_weights, forward, fully_connected
from ..seeding import derive_rng
from .model import EmbeddingModel, build_reference, draw_dropout_mask, embed, glorot_uniform
from .synthetic import FaceSample

logger = structlog.get_logger()

MIN_SAMPLES_PER_IDENTITY = 4


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    loss: float
    accuracy: float


@dataclass(frozen=True, eq=False)
class TrainingResult:
    model: EmbeddingModel
    classifier: Layer
    labels: tuple[int, ...]
    history: tuple[EpochStats, ...] = field(default_factory=tuple)
    accuracy: float = 0.0


def _softmax_xent(logits: np.ndarray, target: int) -> tuple[float, np.ndarray]:
    shifted = logits - logits.max()
    exp = np.exp(shifted)
    probs = exp / exp.sum()
    loss = float(np.log(exp.sum()) - shifted[target])
    grad = probs.copy()
    grad[target] -= 1.0
    return loss, grad


def _check_dataset(samples: Sequence[FaceSample]) -> tuple[int, ...]:
    counts = Counter(s.label for s in samples)
    if len(counts) < 2:
        raise DatasetError(f"need at least 2 identities, got {len(counts)}")
    thin = {label: n for label, n in counts.items() if n < MIN_SAMPLES_PER_IDENTITY}
    if thin:
        raise DatasetError(
            f"every identity needs at least {MIN_SAMPLES_PER_IDENTITY} samples; short: {thin}"
        )
    return tuple(sorted(counts))


def _sample_gradients(
    model: EmbeddingModel,
    classifier: Layer,
    image: np.ndarray,
    target: int,
    mask: np.ndarray,
) -> tuple[float, bool, list[tuple[np.ndarray, np.ndarray]]]:
    """Loss, correctness and parameter gradients (model layers, then classifier)."""
    inputs = []
    x = image
    for layer in model.layers:
        inputs.append(x)
        x = forward(layer, x, mask if layer.kind is LayerKind.DROPOUT else None)
    logits = forward(classifier, x)
    loss, g = _softmax_xent(logits, target)
    correct = int(np.argmax(logits)) == target

    grads_cls = backward_weights(classifier, x, g)
    g = backward_input(classifier, x, g)
    grads: list[tuple[np.ndarray, np.ndarray]] = []
    for i in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[i]
        if layer.weight_count:
            dw, db = backward_weights(layer, inputs[i], g)
            grads.append((dw, db))
        if i:
            g = backward_input(layer, inputs[i], g, mask if layer.kind is LayerKind.DROPOUT else None)
    grads.reverse()
    grads.append((grads_cls.weights, grads_cls.bias))
    return loss, correct, grads


class Adam:
    """Adam over a flat list of arrays, updated in place."""

    def __init__(self, params: list[np.ndarray], betas: tuple[float, float] = ADAM_BETAS, eps: float = ADAM_EPS):
        self.params = params
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads: Sequence[np.ndarray], lr: float) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def cosine_lr(lr: float, epoch: int, epochs: int, floor: float = TOY_LR_FLOOR) -> float:
    """Peak ``lr`` at epoch 0, decaying to ``floor·lr`` at the last epoch."""
    if epochs <= 1:
        return lr
    return lr * (floor + (1.0 - floor) * 0.5 * (1.0 + math.cos(math.pi * epoch / (epochs - 1))))


def train_toy(
    samples: Sequence[FaceSample],
    epochs: int = TOY_EPOCHS,
    lr: float = TOY_LEARNING_RATE,
    seed: int = 0,
    batch_size: int = TOY_BATCH_SIZE,
    dropout_p: float = DEFAULT_DROPOUT,
) -> TrainingResult:
    """Train toy-16 on labelled faces; deterministic given ``seed``."""
    labels = _check_dataset(samples)
    if batch_size < 1:
        raise ConfigError(f"batch size must be positive, got {batch_size}")
    if not lr >= 0.0:
        raise ConfigError(f"learning rate must be nonnegative, got {lr}")
    label_index = {label: i for i, label in enumerate(labels)}
    input_shape = samples[0].image.shape

    model = build_reference(seed, dropout_p, input_shape=input_shape)
    rng = derive_rng(seed, "classifier")
    d, n_cls = model.embedding_dim, len(labels)
    classifier = fully_connected(glorot_uniform(rng, (n_cls, d), d, n_cls), np.zeros(n_cls))

    params = [(np.array(w), np.array(b)) for w, b in model.parameters()]
    params.append((np.array(classifier.weights), np.array(classifier.bias)))
    optimizer = Adam([a for pair in params for a in pair])
    width = model.dropout_width

    logger.info("Training started", samples=len(samples), identities=n_cls, epochs=epochs, lr=lr)
    history = []
    for epoch in range(epochs):
        step_lr = cosine_lr(lr, epoch, epochs)
        order = derive_rng(seed, "epoch", epoch).permutation(len(samples))
        total_loss, total_correct = 0.0, 0
        for start in range(0, len(order), batch_size):
            batch = order[start : start + batch_size]
            acc = [(np.zeros_like(w), np.zeros_like(b)) for w, b in params]
            for pos in batch:
                sample = samples[int(pos)]
                mask = draw_dropout_mask(seed, epoch * len(samples) + int(pos), width, model.dropout_p)
                loss, correct, grads = _sample_gradients(
                    model, classifier, sample.image, label_index[sample.label], mask
                )
                total_loss += loss
                total_correct += correct
                for (aw, ab), (gw, gb) in zip(acc, grads):
                    aw += gw
                    ab += gb
            scale = 1.0 / len(batch)
            optimizer.step([g * scale for pair in acc for g in pair], step_lr)
            model = model.with_parameters(params[:-1])
            classifier = classifier.with_params(*params[-1])

        stats = EpochStats(epoch, total_loss / len(samples), total_correct / len(samples))
        history.append(stats)
        logger.debug("Epoch finished", epoch=epoch, loss=round(stats.loss, 4), accuracy=round(stats.accuracy, 4))

    accuracy = evaluate_accuracy(model, classifier, samples, labels)
    logger.info("Training finished", epochs=epochs, accuracy=round(accuracy, 4))
    return TrainingResult(model=model, classifier=classifier, labels=labels, history=tuple(history), accuracy=accuracy)


def evaluate_accuracy(
    model: EmbeddingModel,
    classifier: Layer,
    samples: Sequence[FaceSample],
    labels: Sequence[int],
) -> float:
    """Deterministic-mode classification accuracy."""
    label_index = {label: i for i, label in enumerate(labels)}
    hits = 0
    for sample in samples:
        logits = forward(classifier, embed(model, sample.image))
        hits += int(np.argmax(logits)) == label_index[sample.label]
    return hits / len(samples)
