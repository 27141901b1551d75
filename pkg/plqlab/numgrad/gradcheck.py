"""Central finite differences for verifying hand-written gradients."""

from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

DEFAULT_STEP = 1e-5


def numeric_gradient(
    f: Callable[[np.ndarray], float],
    x: np.ndarray,
    step: float = DEFAULT_STEP,
    indices: Iterable[tuple[int, ...]] | None = None,
) -> np.ndarray:
    """(f(x + h e_i) - f(x - h e_i)) / 2h for every entry, or only for ``indices``.

    With ``indices`` the result is a flat array in the order given.
    """
    x = np.array(x, dtype=np.float64, copy=True)
    targets = list(np.ndindex(x.shape)) if indices is None else [tuple(i) for i in indices]
    out = np.empty(len(targets))
    for n, idx in enumerate(targets):
        original = x[idx]
        x[idx] = original + step
        plus = f(x)
        x[idx] = original - step
        minus = f(x)
        x[idx] = original
        out[n] = (plus - minus) / (2.0 * step)
    return out.reshape(x.shape) if indices is None else out


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-12) -> np.ndarray:
    """|a - n| / max(|a|, |n|, floor), elementwise."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def top_k_indices(values: np.ndarray, k: int) -> list[tuple[int, ...]]:
    """Indices of the ``k`` largest-magnitude entries, largest first."""
    flat = np.abs(np.asarray(values)).reshape(-1)
    k = min(k, flat.size)
    order = np.argsort(-flat, kind="stable")[:k]
    return [tuple(int(i) for i in np.unravel_index(j, values.shape)) for j in order]
