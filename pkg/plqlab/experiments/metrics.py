"""Image- and region-level quality changes."""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatchError
from ..plq import PlqMap
from ..regions import Region


def delta_q(q_org: float, q_mod: float) -> float:
    """Positive when the modification lowered the image quality."""
    return float(q_org) - float(q_mod)


def delta_p(p_org: PlqMap | np.ndarray, p_mod: PlqMap | np.ndarray, region: Region) -> float:
    """Mean of p_org − p_mod over the pixels of ``region`` only."""
    a = p_org.values if isinstance(p_org, PlqMap) else np.asarray(p_org, dtype=np.float64)
    b = p_mod.values if isinstance(p_mod, PlqMap) else np.asarray(p_mod, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatchError(a.shape, b.shape, what="PLQ map")
    region.require_inside(*a.shape)
    return float((a[region.slices] - b[region.slices]).mean())
