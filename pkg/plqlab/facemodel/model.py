"""Embedding model M_FR: a layer chain with one dropout site before the embedding layer."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Sequence

import numpy as np
import structlog

from ..constants import (
    DEFAULT_DROPOUT,
    TOY_ARCHITECTURE,
    TOY_EMBEDDING_DIM,
    TOY_INPUT_SHAPE,
    TOY_PENULTIMATE_DIM,
)
from ..errors import ConfigError, NonFiniteError, ShapeMismatchError
from ..numgrad import (
    Layer,
    LayerKind,
    avg_pool2x2,
    conv2d,
    dropout_site,
    flatten,
    forward,
    fully_connected,
    output_shape,
    relu,
)
from ..seeding import derive_rng

logger = structlog.get_logger()


@dataclass(frozen=True, eq=False)
class EmbeddingModel:
    """Immutable layer chain mapping an H×W×C image to a D-dim embedding."""

    layers: tuple[Layer, ...]
    input_shape: tuple[int, int, int]
    architecture: str = "custom"

    def __post_init__(self) -> None:
        object.__setattr__(self, "input_shape", tuple(int(d) for d in self.input_shape))
        dropout_at = [i for i, l in enumerate(self.layers) if l.kind is LayerKind.DROPOUT]
        if len(dropout_at) != 1:
            raise ConfigError(f"model needs exactly one dropout site, found {len(dropout_at)}")
        fc_at = [i for i, l in enumerate(self.layers) if l.kind is LayerKind.FULLY_CONNECTED]
        if not fc_at or dropout_at[0] != fc_at[-1] - 1:
            raise ConfigError("the dropout site must sit immediately before the final fully connected layer")

        # Pin each layer's index and declared input shape.
        shape: tuple[int, ...] = self.input_shape
        pinned = []
        for i, layer in enumerate(self.layers):
            layer = replace(layer, index=i, input_shape=None)
            out = output_shape(layer, shape)
            pinned.append(replace(layer, input_shape=shape))
            shape = out
        if len(shape) != 1:
            raise ConfigError(f"model output must be a vector, got shape {shape}")
        object.__setattr__(self, "layers", tuple(pinned))
        object.__setattr__(self, "_embedding_dim", int(shape[0]))

    @property
    def embedding_dim(self) -> int:
        return self._embedding_dim

    @property
    def dropout_index(self) -> int:
        return next(i for i, l in enumerate(self.layers) if l.kind is LayerKind.DROPOUT)

    @property
    def dropout_p(self) -> float:
        return self.layers[self.dropout_index].drop_p

    @property
    def dropout_width(self) -> int:
        """Number of features the dropout mask covers."""
        return int(np.prod(self.layers[self.dropout_index].input_shape))

    def with_dropout(self, p: float) -> EmbeddingModel:
        layers = list(self.layers)
        layers[self.dropout_index] = replace(layers[self.dropout_index], drop_p=p)
        return replace(self, layers=tuple(layers))

    def with_parameters(self, params: Sequence[tuple[np.ndarray, np.ndarray]]) -> EmbeddingModel:
        """Copy with new (weights, bias) for each weighted layer, in order."""
        params = list(params)
        layers = []
        for layer in self.layers:
            if layer.weight_count:
                w, b = params.pop(0)
                layer = layer.with_params(w, b)
            layers.append(layer)
        if params:
            raise ConfigError(f"{len(params)} unused parameter sets")
        return replace(self, layers=tuple(layers))

    def parameters(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return [(l.weights, l.bias) for l in self.layers if l.weight_count]


class ForwardTrace(NamedTuple):
    """Inputs seen by every layer of a deterministic pass, plus the output."""

    inputs: tuple[np.ndarray, ...]
    output: np.ndarray


def check_image(model: EmbeddingModel, image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if image.shape != model.input_shape:
        raise ShapeMismatchError(model.input_shape, image.shape, what="image")
    if not np.all(np.isfinite(image)):
        raise NonFiniteError("image contains NaN or Inf")
    return image


def trace(model: EmbeddingModel, image: np.ndarray, stop: int | None = None) -> ForwardTrace:
    """Deterministic pass (dropout site disabled) recording each layer input.

    With ``stop`` the pass ends before layer ``stop`` and ``output`` is
    that layer's input.
    """
    x = check_image(model, image)
    inputs = []
    for layer in model.layers[:stop]:
        inputs.append(x)
        x = forward(layer, x)
    return ForwardTrace(tuple(inputs), x)


def embed(model: EmbeddingModel, image: np.ndarray) -> np.ndarray:
    """Deterministic embedding e_I."""
    return trace(model, image).output


def draw_dropout_mask(seed: int, k: int, width: int, p: float) -> np.ndarray:
    """Bernoulli(1 - p) keep-mask for pass ``k``, from stream hash(seed, k)."""
    rng = derive_rng(seed, k)
    return (rng.random(width) < 1.0 - p).astype(np.float64)


def complete_pass(model: EmbeddingModel, site_input: np.ndarray, mask: np.ndarray | None) -> np.ndarray:
    """Run the layers from the dropout site onward with one mask."""
    x = site_input
    for layer in model.layers[model.dropout_index :]:
        x = forward(layer, x, mask if layer.kind is LayerKind.DROPOUT else None)
    return x


def stochastic_embed(
    model: EmbeddingModel,
    image: np.ndarray,
    m: int,
    seed: int,
    masks: np.ndarray | None = None,
) -> np.ndarray:
    """m×D matrix X_I of embeddings under m independent dropout patterns.

    The prefix up to the dropout site is computed once. Row k always uses
    the mask from stream hash(seed, k), unless ``masks`` (m × width)
    overrides them.
    """
    if m < 2:
        raise ConfigError(f"at least 2 stochastic passes are needed, got m={m}")
    site_input = trace(model, image, stop=model.dropout_index).output
    width = site_input.size
    if masks is not None:
        masks = np.asarray(masks, dtype=np.float64)
        if masks.shape != (m, width):
            raise ShapeMismatchError((m, width), masks.shape, what="dropout masks")
    rows = []
    for k in range(m):
        mask = masks[k] if masks is not None else draw_dropout_mask(seed, k, width, model.dropout_p)
        rows.append(complete_pass(model, site_input, mask))
    return np.vstack(rows)


def activation_pattern(model: EmbeddingModel, image: np.ndarray) -> tuple[np.ndarray, ...]:
    """Which ReLU inputs are positive; identical patterns mean the same linear piece."""
    tr = trace(model, image)
    return tuple(x > 0.0 for layer, x in zip(model.layers, tr.inputs) if layer.kind is LayerKind.RELU)


# ── Reference architecture ─────────────────────────────
def glorot_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def build_reference(
    seed: int = 0,
    dropout_p: float = DEFAULT_DROPOUT,
    input_shape: tuple[int, int, int] = TOY_INPUT_SHAPE,
    embedding_dim: int = TOY_EMBEDDING_DIM,
) -> EmbeddingModel:
    """toy-16: conv8 → pool → conv16 → pool → FC64 → dropout → FC(D) + ReLU."""
    h, w, c = input_shape
    if h % 4 or w % 4:
        raise ConfigError(f"toy architecture needs H and W divisible by 4, got {input_shape}")
    flat = (h // 4) * (w // 4) * 16

    def conv(idx: int, cin: int, cout: int) -> Layer:
        rng = derive_rng(seed, "init", idx)
        weights = glorot_uniform(rng, (3, 3, cin, cout), 9 * cin, 9 * cout)
        return conv2d(weights, np.zeros(cout), stride=1, padding=1)

    def dense(idx: int, fin: int, fout: int) -> Layer:
        rng = derive_rng(seed, "init", idx)
        return fully_connected(glorot_uniform(rng, (fout, fin), fin, fout), np.zeros(fout))

    layers = (
        conv(0, c, 8),
        relu(),
        avg_pool2x2(),
        conv(3, 8, 16),
        relu(),
        avg_pool2x2(),
        flatten(),
        dense(7, flat, TOY_PENULTIMATE_DIM),
        relu(),
        dropout_site(dropout_p),
        dense(10, TOY_PENULTIMATE_DIM, embedding_dim),
        relu(),
    )
    model = EmbeddingModel(layers=layers, input_shape=input_shape, architecture=TOY_ARCHITECTURE)
    logger.debug("Built reference model", seed=seed, input_shape=input_shape, embedding_dim=embedding_dim)
    return model
