"""Pixel-level quality maps.

A per-image linear quality head is attached to the embedding so that
its output on e_I is Q̂_I. Its gradient with respect to the input pixels
is merged over channels and squashed by v(ŝ) = 1 − 1/(1 + 10^γ·ŝ²).
Maps are never rescaled per image, so values stay comparable across
images processed with the same γ.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np
import structlog
from numpy.lib.stride_tricks import sliding_window_view

from .constants import (
    DEFAULT_CLIP_NORM,
    DEFAULT_GAMMA,
    FLOAT_FORMAT,
    GAMMA_TARGET_QUANTILE,
    GAMMA_TARGET_VALUE,
    PLQ_CSV_MAX,
)
from .errors import (
    ConfigError,
    DataError,
    NonFiniteError,
    RegionError,
    ShapeMismatchError,
    ZeroEmbeddingError,
    ZeroReferenceError,
)
from .facemodel import EmbeddingModel
from .facemodel.model import ForwardTrace, activation_pattern, trace
from .fiq import FiqConfig, QualityResult, quality
from .numgrad import backward_input, numeric_gradient, relative_error, top_k_indices
from .numgrad.gradcheck import DEFAULT_STEP
from .regions import Region

logger = structlog.get_logger()


class WeightMode(str, Enum):
    LITERAL = "paper-literal"
    SIGN_CORRECTED = "sign-corrected"

    @classmethod
    def _missing_(cls, value: object) -> WeightMode | None:
        return cls.LITERAL if value == "uniform" else None


@dataclass(frozen=True)
class PlqOptions:
    """Everything between Q̂ and the map: head mode, clipping, γ."""

    gamma: float = DEFAULT_GAMMA
    weight_mode: WeightMode = WeightMode.LITERAL
    clip_norm: float | None = DEFAULT_CLIP_NORM

    def __post_init__(self) -> None:
        object.__setattr__(self, "weight_mode", WeightMode(self.weight_mode))
        gamma_scale(self.gamma)
        if self.clip_norm is not None and not self.clip_norm > 0.0:
            raise ConfigError(f"clip norm must be positive, got {self.clip_norm}")


@dataclass(frozen=True, eq=False)
class QualityHead:
    """Single linear node with zero bias on top of the embedding layer."""

    weights: np.ndarray
    source_quality: float
    weight_mode: WeightMode
    bias: float = 0.0

    def __call__(self, embedding: np.ndarray) -> float:
        return float(self.weights @ np.asarray(embedding, dtype=np.float64)) + self.bias


@dataclass(frozen=True, eq=False)
class SaliencyMap:
    grads: np.ndarray
    clip_norm_applied: float | None = None
    clipped_steps: int = 0


@dataclass(frozen=True, eq=False)
class PlqMap:
    values: np.ndarray
    gamma: float
    merged_saliency: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


# ── Quality head ───────────────────────────────────────
def build_head(
    embedding: np.ndarray,
    q_scaled: float,
    mode: WeightMode | str = WeightMode.LITERAL,
) -> QualityHead:
    """w = Q̂/‖e‖₁ in every component (literal), or Q̂·sign(e)/‖e‖₁ in sign-corrected mode.

    Only the sign-corrected weights reproduce Q̂ for embeddings with
    negative components; for nonnegative embeddings both modes agree.
    """
    mode = WeightMode(mode)
    e = np.asarray(embedding, dtype=np.float64)
    l1 = float(np.abs(e).sum())
    if l1 == 0.0:
        raise ZeroEmbeddingError()
    if mode is WeightMode.LITERAL:
        weights = np.full(e.shape, q_scaled / l1)
    else:
        weights = q_scaled * np.sign(e) / l1
    return QualityHead(weights=weights, source_quality=float(q_scaled), weight_mode=mode)


# ── Saliency ───────────────────────────────────────────
def _clip(g: np.ndarray, clip_norm: float | None) -> tuple[np.ndarray, bool]:
    if clip_norm is None:
        return g, False
    norm = float(np.linalg.norm(g))
    if norm > clip_norm:
        return g * (clip_norm / norm), True
    return g, False


def saliency_from_trace(
    model: EmbeddingModel,
    fwd: ForwardTrace,
    head: QualityHead,
    clip_norm: float | None = None,
) -> SaliencyMap:
    """Backpropagate the head weights through a recorded deterministic pass."""
    if head.weights.shape != (model.embedding_dim,):
        raise ShapeMismatchError((model.embedding_dim,), head.weights.shape, what="head weights")
    if clip_norm is not None and not clip_norm > 0.0:
        raise ConfigError(f"clip norm must be positive, got {clip_norm}")
    g = head.weights
    clipped = 0
    for layer, x in zip(reversed(model.layers), reversed(fwd.inputs)):
        g, hit = _clip(g, clip_norm)
        clipped += hit
        g = backward_input(layer, x, g)
    if not np.all(np.isfinite(g)):
        raise NonFiniteError("saliency contains NaN or Inf; set a finite --clip-norm")
    if clipped:
        logger.debug("Gradient clipped", steps=clipped, clip_norm=clip_norm)
    return SaliencyMap(grads=g, clip_norm_applied=clip_norm, clipped_steps=clipped)


def saliency(
    model: EmbeddingModel,
    image: np.ndarray,
    head: QualityHead,
    clip_norm: float | None = None,
) -> SaliencyMap:
    """S(I) = ∂M_Q(I)/∂I with the dropout site in pass-through mode.

    If ``clip_norm`` is set, any gradient entering a layer's backward step
    with global L2 norm above it is rescaled to that norm.
    """
    return saliency_from_trace(model, trace(model, image), head, clip_norm)


def merge_channels(s: SaliencyMap | np.ndarray) -> np.ndarray:
    """Ŝ: mean of absolute gradients over channels."""
    grads = s.grads if isinstance(s, SaliencyMap) else np.asarray(s, dtype=np.float64)
    if grads.ndim != 3:
        raise ShapeMismatchError("(H, W, C)", grads.shape, what="saliency")
    return np.abs(grads).mean(axis=2)


# ── Visualization ──────────────────────────────────────
def gamma_scale(gamma: float) -> float:
    """10^γ, or ConfigError when γ is not finite or 10^γ overflows."""
    with np.errstate(over="ignore", invalid="ignore"):
        scale = float(np.power(10.0, gamma))
    if not (np.isfinite(gamma) and np.isfinite(scale)):
        raise ConfigError(f"gamma must be finite with 10**gamma representable, got {gamma}")
    return scale


def visualize_values(s_hat: np.ndarray, gamma: float) -> np.ndarray:
    """v(ŝ) = 1 − 1/(1 + 10^γ·ŝ²), elementwise, kept strictly below 1."""
    s_hat = np.asarray(s_hat, dtype=np.float64)
    if np.any(s_hat < 0.0):
        raise DataError("merged saliency must be nonnegative")
    if not np.all(np.isfinite(s_hat)):
        raise NonFiniteError("merged saliency contains NaN or Inf")
    scale = gamma_scale(gamma)
    with np.errstate(over="ignore"):
        values = 1.0 - 1.0 / (1.0 + scale * s_hat * s_hat)
    return np.minimum(values, np.nextafter(1.0, 0.0))


def visualize(s_hat: np.ndarray, gamma: float = DEFAULT_GAMMA) -> PlqMap:
    s_hat = np.asarray(s_hat, dtype=np.float64)
    return PlqMap(values=visualize_values(s_hat, gamma), gamma=float(gamma), merged_saliency=s_hat.copy())


# ── End to end ─────────────────────────────────────────
def plq_map(
    model: EmbeddingModel,
    image: np.ndarray,
    fiq_config: FiqConfig,
    gamma: float = DEFAULT_GAMMA,
    mode: WeightMode | str = WeightMode.LITERAL,
    clip_norm: float | None = DEFAULT_CLIP_NORM,
) -> tuple[QualityResult, PlqMap]:
    """quality → head → saliency → merge → visualize.

    One deterministic pass feeds both the head (its embedding) and the
    backward pass (its recorded layer inputs).
    """
    result = quality(model, image, fiq_config)
    fwd = trace(model, image)
    head = build_head(fwd.output, result.q_scaled, mode)
    s = saliency_from_trace(model, fwd, head, clip_norm)
    plq = visualize(merge_channels(s), gamma)
    logger.debug(
        "PLQ map computed",
        q_raw=result.q_raw,
        q_scaled=result.q_scaled,
        mean_pixel_quality=float(plq.values.mean()),
    )
    return result, plq


def plq_map_with(
    model: EmbeddingModel, image: np.ndarray, fiq_config: FiqConfig, options: PlqOptions
) -> tuple[QualityResult, PlqMap]:
    return plq_map(model, image, fiq_config, options.gamma, options.weight_mode, options.clip_norm)


# ── Gradient check ─────────────────────────────────────
@dataclass(frozen=True, eq=False)
class GradCheckReport:
    indices: tuple[tuple[int, ...], ...]
    analytic: np.ndarray
    numeric: np.ndarray
    errors: np.ndarray
    retried: int

    @property
    def max_error(self) -> float:
        return float(self.errors.max()) if self.errors.size else 0.0

    def passed(self, tolerance: float = 1e-5) -> bool:
        return self.max_error < tolerance


def check_saliency(
    model: EmbeddingModel,
    image: np.ndarray,
    head: QualityHead,
    top_k: int = 100,
    step: float = DEFAULT_STEP,
    max_retries: int = 4,
) -> GradCheckReport:
    """Unclipped analytic saliency against central differences on the top-k entries.

    The network is piecewise linear. When x ± h lands on different ReLU
    patterns the step straddles a kink, so it is shrunk tenfold and retried.
    """
    image = np.asarray(image, dtype=np.float64)
    analytic_full = saliency(model, image, head).grads
    indices = top_k_indices(analytic_full, top_k)

    def objective(x: np.ndarray) -> float:
        return head(trace(model, x).output)

    def same_piece(x: np.ndarray, idx: tuple[int, ...], h: float) -> bool:
        plus, minus = x.copy(), x.copy()
        plus[idx] += h
        minus[idx] -= h
        a, b = activation_pattern(model, plus), activation_pattern(model, minus)
        return all(np.array_equal(p, q) for p, q in zip(a, b))

    numeric = np.empty(len(indices))
    retried = 0
    for n, idx in enumerate(indices):
        h = step
        for _ in range(max_retries):
            if same_piece(image, idx, h):
                break
            h /= 10.0
            retried += 1
        numeric[n] = numeric_gradient(objective, image, h, indices=[idx])[0]

    analytic = np.array([analytic_full[idx] for idx in indices])
    errors = relative_error(analytic, numeric)
    logger.debug("Saliency checked", entries=len(indices), max_error=float(errors.max(initial=0.0)), retried=retried)
    return GradCheckReport(tuple(indices), analytic, numeric, errors, retried)


# ── Calibration ────────────────────────────────────────
def calibrate_gamma(reference_s_hats: Sequence[np.ndarray], face_box: Region) -> float:
    """γ such that the 95th percentile of Ŝ inside the face box maps to 0.9."""
    if not reference_s_hats:
        raise ConfigError("gamma calibration needs at least one reference map")
    pooled = []
    for s_hat in reference_s_hats:
        s_hat = np.asarray(s_hat, dtype=np.float64)
        face_box.require_inside(*s_hat.shape[:2])
        pooled.append(s_hat[face_box.slices].reshape(-1))
    q95 = float(np.percentile(np.concatenate(pooled), GAMMA_TARGET_QUANTILE))
    if q95 <= 0.0:
        raise ZeroReferenceError("reference saliency is zero inside the face box")
    # v(q) = t  ⇔  10^γ q² = t / (1 − t)
    target_odds = GAMMA_TARGET_VALUE / (1.0 - GAMMA_TARGET_VALUE)
    gamma = math.log10(target_odds) - 2.0 * math.log10(q95)
    logger.info("Gamma calibrated", q95=q95, gamma=gamma, references=len(reference_s_hats))
    return gamma


# ── Region search ──────────────────────────────────────
def find_low_quality_region(plq: PlqMap | np.ndarray, size: int, within: Region | None = None) -> Region:
    """The size×size window with the lowest mean pixel quality.

    Ties resolve to the top-most, then left-most window.
    """
    values = plq.values if isinstance(plq, PlqMap) else np.asarray(plq, dtype=np.float64)
    h, w = values.shape
    area = within or Region(0, 0, h, w)
    area.require_inside(h, w)
    if size < 1 or size > min(area.height, area.width):
        raise RegionError(f"window size {size} does not fit in {area.height}×{area.width}")
    means = sliding_window_view(values[area.slices], (size, size)).mean(axis=(2, 3))
    i, j = np.unravel_index(int(np.argmin(means)), means.shape)
    return Region.square(area.top + int(i), area.left + int(j), size)


# ── CSV ────────────────────────────────────────────────
def write_plq_csv(plq: PlqMap | np.ndarray, path: str | Path) -> Path:
    """H rows of W comma-separated values, nine significant digits, all below 1."""
    values = plq.values if isinstance(plq, PlqMap) else np.asarray(plq, dtype=np.float64)
    # %.9g can round values near 1 up to 1
    values = np.minimum(values, PLQ_CSV_MAX)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, values, fmt=FLOAT_FORMAT, delimiter=",", newline="\n")
    return path


def read_plq_csv(path: str | Path) -> np.ndarray:
    try:
        values = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise DataError(f"malformed PLQ CSV {path}: {exc}") from exc
    return values
