"""Model-specific face image quality from stochastic embeddings.

Q_I  = 2·σ(−(2/m²)·Σ_{i<j} ‖x_i − x_j‖)   robustness of the embeddings
Q̂_I = σ(α·(Q_I − r))                      optional stretch to (0, 1)
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple, Sequence

import numpy as np
import structlog
from scipy.spatial.distance import pdist
from scipy.special import expit

from .constants import (
    DEFAULT_DROPOUT,
    DEFAULT_PASSES,
    DEFAULT_PRESET,
    DEFAULT_SEED,
    SCALE_LOGIT_SPAN,
    SCALE_STD_MULTIPLIER,
)
from .errors import ConfigError, ShapeMismatchError, ZeroVarianceError
from .facemodel import EmbeddingModel, stochastic_embed
from .parallel import ordered_map
from .seeding import derive_seed

logger = structlog.get_logger()


@dataclass(frozen=True)
class FiqConfig:
    m: int = DEFAULT_PASSES
    p_d: float = DEFAULT_DROPOUT
    alpha: float = DEFAULT_PRESET.alpha
    r: float = DEFAULT_PRESET.r
    normalize_embeddings: bool = False
    seed: int = DEFAULT_SEED

    def __post_init__(self) -> None:
        if self.m < 2:
            raise ConfigError(f"m must be at least 2, got {self.m}")
        if not 0.0 < self.p_d < 1.0:
            raise ConfigError(f"dropout probability must be in (0, 1), got {self.p_d}")
        if not self.alpha > 0.0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}")
        if self.seed < 0:
            raise ConfigError(f"seed must be a nonnegative integer, got {self.seed}")

    def with_seed(self, seed: int) -> FiqConfig:
        return replace(self, seed=seed)


@dataclass(frozen=True)
class QualityResult:
    q_raw: float
    q_scaled: float
    config_used: FiqConfig


class QualityStats(NamedTuple):
    mean: float
    std: float
    values: tuple[float, ...]


class ScalingCalibration(NamedTuple):
    alpha: float
    r: float


def _as_matrix(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeMismatchError("(m, D)", x.shape, what="stochastic embeddings")
    if x.shape[0] < 2:
        raise ConfigError(f"quality needs at least 2 stochastic embeddings, got {x.shape[0]}")
    return x


def normalize_rows(x: np.ndarray) -> np.ndarray:
    """Scale rows to unit L2 norm; zero rows stay zero."""
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return np.divide(x, norms, out=np.zeros_like(x), where=norms > 0.0)


def pairwise_distance_sum(x: np.ndarray) -> float:
    """Σ_{i<j} ‖x_i − x_j‖ over unordered row pairs."""
    return float(pdist(_as_matrix(x), metric="euclidean").sum())


def quality_raw(x: np.ndarray, normalize_embeddings: bool = False) -> float:
    """Q_I in (0, 1]; exactly 1 when every stochastic embedding is identical."""
    x = _as_matrix(x)
    if normalize_embeddings:
        x = normalize_rows(x)
    m = x.shape[0]
    spread = (2.0 / (m * m)) * pairwise_distance_sum(x)
    return float(2.0 * expit(-spread))


def scale_quality(q_raw: float, alpha: float, r: float) -> float:
    """Q̂_I = σ(α(Q_I − r)); strictly increasing in ``q_raw``."""
    if not alpha > 0.0:
        raise ConfigError(f"alpha must be positive, got {alpha}")
    return float(expit(alpha * (q_raw - r)))


def quality(
    model: EmbeddingModel,
    image: np.ndarray,
    config: FiqConfig,
    masks: np.ndarray | None = None,
) -> QualityResult:
    """Stochastic embeddings → Q_I → Q̂_I, deterministic given ``config.seed``."""
    if model.dropout_p != config.p_d:
        model = model.with_dropout(config.p_d)
    x = stochastic_embed(model, image, config.m, config.seed, masks=masks)
    q_raw = quality_raw(x, config.normalize_embeddings)
    q_scaled = scale_quality(q_raw, config.alpha, config.r)
    return QualityResult(q_raw=q_raw, q_scaled=q_scaled, config_used=config)


def repeat_seeds(seed: int, repeats: int) -> list[int]:
    return [derive_seed(seed, k) for k in range(repeats)]


def quality_stats(
    model: EmbeddingModel,
    image: np.ndarray,
    config: FiqConfig,
    repeats: int,
    masks: np.ndarray | None = None,
    workers: int | None = 1,
) -> QualityStats:
    """Sample mean and std (n − 1) of Q̂ over ``repeats`` reseeded evaluations."""
    if repeats < 2:
        raise ConfigError(f"repeats must be at least 2, got {repeats}")
    configs = [config.with_seed(s) for s in repeat_seeds(config.seed, repeats)]
    values = ordered_map(lambda c: quality(model, image, c, masks=masks).q_scaled, configs, workers)
    arr = np.asarray(values)
    std = 0.0 if np.ptp(arr) == 0.0 else float(arr.std(ddof=1))
    return QualityStats(mean=float(arr.mean()), std=std, values=tuple(values))


def calibrate_scaling(dev_qualities: Sequence[float]) -> ScalingCalibration:
    """r = mean, α = ln(19) / (2·std), so mean ± 2·std maps to 0.05 / 0.95."""
    q = np.asarray(dev_qualities, dtype=np.float64)
    if q.size < 2:
        raise ConfigError(f"calibration needs at least 2 development qualities, got {q.size}")
    std = float(q.std(ddof=1))
    if std == 0.0 or np.unique(q).size < 2:
        raise ZeroVarianceError()
    r = float(q.mean())
    alpha = SCALE_LOGIT_SPAN / (SCALE_STD_MULTIPLIER * std)
    logger.info("Scaling calibrated", n=int(q.size), alpha=alpha, r=r)
    return ScalingCalibration(alpha=alpha, r=r)


def quality_distribution(q_raws: Sequence[float], alpha: float, r: float) -> dict[str, tuple[float, ...]]:
    """(min, q1, median, q3, max) of raw and scaled qualities."""
    raw = np.asarray(q_raws, dtype=np.float64)
    scaled = expit(alpha * (raw - r))
    points = [0, 25, 50, 75, 100]
    return {
        "raw": tuple(float(v) for v in np.percentile(raw, points)),
        "scaled": tuple(float(v) for v in np.percentile(scaled, points)),
    }
