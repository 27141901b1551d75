"""Random square masks inside the inner 90% of an image."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from ..constants import (
    ABSOLUTE_MASK_SIZES,
    ABSOLUTE_SIZE_MIN_SIDE,
    INNER_MARGIN_FRACTION,
    MASK_FILL_VALUE,
    MASK_SIZE_FRACTIONS,
)
from ..errors import ConfigError, RegionError
from ..regions import Region
from ..seeding import derive_rng

FillValue = Union[float, tuple[float, ...]]


def _round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


def inner_margins(height: int, width: int) -> tuple[int, int]:
    """round(0.05·H), round(0.05·W)."""
    return _round_half_up(INNER_MARGIN_FRACTION * height), _round_half_up(INNER_MARGIN_FRACTION * width)


def inner_region(height: int, width: int) -> Region:
    mh, mw = inner_margins(height, width)
    return Region(mh, mw, height - 2 * mh, width - 2 * mw)


def max_mask_size(height: int, width: int) -> int:
    inner = inner_region(height, width)
    return min(inner.height, inner.width)


def resolve_mask_sizes(height: int, width: int) -> list[int]:
    """Absolute sizes on large inputs, fractions of the short side otherwise."""
    side = min(height, width)
    if side >= ABSOLUTE_SIZE_MIN_SIDE:
        return list(ABSOLUTE_MASK_SIZES)
    return [max(1, _round_half_up(f * side)) for f in MASK_SIZE_FRACTIONS]


@dataclass(frozen=True)
class MaskSpec:
    top: int
    left: int
    size: int
    fill_value: FillValue = MASK_FILL_VALUE

    @property
    def region(self) -> Region:
        return Region.square(self.top, self.left, self.size)


def _fill_array(fill_value: FillValue, channels: int) -> np.ndarray:
    fill = np.asarray(fill_value, dtype=np.float64).reshape(-1)
    if fill.size not in (1, channels):
        raise ConfigError(f"fill value needs 1 or {channels} components, got {fill.size}")
    return np.broadcast_to(fill, (channels,))


def apply_mask(image: np.ndarray, region: Region, fill_value: FillValue = MASK_FILL_VALUE) -> np.ndarray:
    """Copy of ``image`` with ``region`` set to ``fill_value`` in every channel."""
    image = np.asarray(image, dtype=np.float64)
    region.require_inside(*image.shape[:2])
    out = image.copy()
    out[region.slices] = _fill_array(fill_value, image.shape[2])
    return out


def place_random_mask(
    image: np.ndarray,
    s: int,
    rng_seed: int,
    fill_value: FillValue = MASK_FILL_VALUE,
) -> tuple[np.ndarray, MaskSpec]:
    """Uniform top/left so the s×s square lies in the inner region."""
    image = np.asarray(image, dtype=np.float64)
    h, w = image.shape[:2]
    if s < 1:
        raise ConfigError(f"mask size must be positive, got {s}")
    limit = max_mask_size(h, w)
    if s > limit:
        raise RegionError(f"mask size {s} does not fit the inner region of a {h}×{w} image; max feasible size is {limit}")
    mh, mw = inner_margins(h, w)
    rng = derive_rng(rng_seed, "mask")
    top = int(rng.integers(mh, h - mh - s, endpoint=True))
    left = int(rng.integers(mw, w - mw - s, endpoint=True))
    spec = MaskSpec(top=top, left=left, size=s, fill_value=fill_value)
    return apply_mask(image, spec.region, fill_value), spec


def feasible_sizes(sizes: Sequence[int], height: int, width: int) -> tuple[list[int], list[int]]:
    """Split ``sizes`` into (feasible, infeasible) for an image."""
    limit = max_mask_size(height, width)
    return [s for s in sizes if 1 <= s <= limit], [s for s in sizes if not 1 <= s <= limit]
