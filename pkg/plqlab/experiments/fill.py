"""Deterministic fill proxies for inpainting a masked region."""

from __future__ import annotations

from enum import Enum

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..constants import BLUR_PASSES, FILL_RING_WIDTH
from ..errors import RegionError
from ..regions import Region


class FillMode(str, Enum):
    MEAN_FILL = "mean_fill"
    BLUR_FILL = "blur_fill"


def border_ring(region: Region, height: int, width: int, ring: int = FILL_RING_WIDTH) -> np.ndarray:
    """Boolean grid of pixels within ``ring`` pixels outside ``region``, clipped to the image."""
    region.require_inside(height, width)
    grid = np.zeros((height, width), dtype=bool)
    grid[max(0, region.top - ring) : region.bottom + ring, max(0, region.left - ring) : region.right + ring] = True
    grid[region.slices] = False
    return grid


def _mean_fill(image: np.ndarray, region: Region) -> np.ndarray:
    h, w = image.shape[:2]
    ring = border_ring(region, h, w)
    if not ring.any():
        raise RegionError(f"region {region} has an empty border ring")
    out = image.copy()
    out[region.slices] = image[ring].mean(axis=0)
    return out


def _blur_fill(image: np.ndarray, region: Region, passes: int) -> np.ndarray:
    out = _mean_fill(image, region)
    inside = region.mask(*image.shape[:2])
    for _ in range(passes):
        padded = np.pad(out, ((1, 1), (1, 1), (0, 0)), mode="edge")
        blurred = sliding_window_view(padded, (3, 3), axis=(0, 1)).mean(axis=(3, 4))
        out = np.where(inside[..., None], blurred, out)
    return out


def fill_region(
    image: np.ndarray,
    region: Region,
    mode: FillMode | str = FillMode.MEAN_FILL,
    passes: int = BLUR_PASSES,
) -> np.ndarray:
    """Replace ``region`` from its surroundings; pixels outside it are untouched.

    mean_fill uses the per-channel mean of the 2-pixel border ring.
    blur_fill starts from that and runs 3×3 box-blur passes over the
    region with everything outside held fixed.
    """
    image = np.asarray(image, dtype=np.float64)
    if FillMode(mode) is FillMode.MEAN_FILL:
        return _mean_fill(image, region)
    return _blur_fill(image, region, passes)
