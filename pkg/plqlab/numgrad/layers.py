"""Fixed layer menu with hand-written forward and backward passes.

Activations are single images laid out H×W×C (row-major, float64);
fully connected layers work on flat vectors. There is no batch axis
and no autodiff tape: callers chain ``forward`` / ``backward_input``
themselves.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, NamedTuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ConfigError, ShapeMismatchError


class LayerKind(str, Enum):
    CONV2D = "conv2d"
    FULLY_CONNECTED = "fully_connected"
    RELU = "relu"
    AVG_POOL = "avg_pool2x2"
    FLATTEN = "flatten"
    DROPOUT = "dropout_site"


WEIGHTED_KINDS = frozenset({LayerKind.CONV2D, LayerKind.FULLY_CONNECTED})


def _frozen(array: Any) -> np.ndarray:
    out = np.array(array, dtype=np.float64, order="C", copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class Layer:
    """One layer of an embedding network.

    Conv2D weights are (k, k, C_in, C_out); FullyConnected weights are
    (out, in) so that ``y = W x + b``.
    """

    kind: LayerKind
    weights: np.ndarray | None = None
    bias: np.ndarray | None = None
    stride: int = 1
    padding: int = 0
    drop_p: float = 0.0
    input_shape: tuple[int, ...] | None = None
    index: int | None = field(default=None)

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", LayerKind(self.kind))
        if self.kind in WEIGHTED_KINDS:
            if self.weights is None:
                raise ConfigError(f"{self.kind.value} layer needs weights")
            w = _frozen(self.weights)
            expected_ndim = 4 if self.kind is LayerKind.CONV2D else 2
            if w.ndim != expected_ndim:
                raise ShapeMismatchError(f"{expected_ndim}-d weights", w.shape, self.index, what="weight")
            out_dim = w.shape[-1] if self.kind is LayerKind.CONV2D else w.shape[0]
            b = np.zeros(out_dim) if self.bias is None else self.bias
            b = _frozen(b)
            if b.shape != (out_dim,):
                raise ShapeMismatchError((out_dim,), b.shape, self.index, what="bias")
            object.__setattr__(self, "weights", w)
            object.__setattr__(self, "bias", b)
        if self.kind is LayerKind.CONV2D:
            if self.weights.shape[0] != self.weights.shape[1]:
                raise ConfigError("Conv2D kernels must be square")
            if self.stride < 1 or self.padding < 0:
                raise ConfigError("Conv2D needs stride >= 1 and padding >= 0")
        if self.kind is LayerKind.DROPOUT and not 0.0 < self.drop_p < 1.0:
            raise ConfigError(f"drop probability must be in (0, 1), got {self.drop_p}")
        if self.input_shape is not None:
            object.__setattr__(self, "input_shape", tuple(int(d) for d in self.input_shape))

    # ── Introspection ──────────────────────────────────
    @property
    def kernel_size(self) -> int:
        return int(self.weights.shape[0])

    @property
    def in_features(self) -> int:
        return int(self.weights.shape[1])

    @property
    def out_features(self) -> int:
        return int(self.weights.shape[0])

    @property
    def weight_count(self) -> int:
        if self.kind not in WEIGHTED_KINDS:
            return 0
        return int(self.weights.size + self.bias.size)

    def describe(self) -> dict[str, Any]:
        """JSON-ready description (no weight values)."""
        desc: dict[str, Any] = {"kind": self.kind.value}
        if self.kind is LayerKind.CONV2D:
            desc.update(
                kernel=self.kernel_size,
                in_channels=int(self.weights.shape[2]),
                out_channels=int(self.weights.shape[3]),
                stride=self.stride,
                padding=self.padding,
            )
        elif self.kind is LayerKind.FULLY_CONNECTED:
            desc.update(in_features=self.in_features, out_features=self.out_features)
        elif self.kind is LayerKind.DROPOUT:
            desc.update(p=self.drop_p)
        desc["weight_count"] = self.weight_count
        return desc

    def with_params(self, weights: np.ndarray, bias: np.ndarray) -> Layer:
        return replace(self, weights=weights, bias=bias)


class ParamGrads(NamedTuple):
    weights: np.ndarray
    bias: np.ndarray


# ── Constructors ───────────────────────────────────────
def conv2d(weights: Any, bias: Any = None, stride: int = 1, padding: int = 0) -> Layer:
    return Layer(LayerKind.CONV2D, weights=weights, bias=bias, stride=stride, padding=padding)


def fully_connected(weights: Any, bias: Any = None) -> Layer:
    return Layer(LayerKind.FULLY_CONNECTED, weights=weights, bias=bias)


def relu() -> Layer:
    return Layer(LayerKind.RELU)


def avg_pool2x2() -> Layer:
    return Layer(LayerKind.AVG_POOL)


def flatten() -> Layer:
    return Layer(LayerKind.FLATTEN)


def dropout_site(p: float) -> Layer:
    return Layer(LayerKind.DROPOUT, drop_p=p)


def layer_from_description(desc: dict[str, Any], weights: Any = None, bias: Any = None) -> Layer:
    kind = LayerKind(desc["kind"])
    if kind is LayerKind.CONV2D:
        return conv2d(weights, bias, stride=int(desc.get("stride", 1)), padding=int(desc.get("padding", 0)))
    if kind is LayerKind.FULLY_CONNECTED:
        return fully_connected(weights, bias)
    if kind is LayerKind.DROPOUT:
        return dropout_site(float(desc["p"]))
    return Layer(kind)


def declared_param_shapes(desc: dict[str, Any]) -> tuple[tuple[int, ...], tuple[int, ...]] | None:
    """(weight shape, bias shape) implied by a description, or None for weightless layers."""
    kind = LayerKind(desc["kind"])
    if kind is LayerKind.CONV2D:
        k, cin, cout = int(desc["kernel"]), int(desc["in_channels"]), int(desc["out_channels"])
        return (k, k, cin, cout), (cout,)
    if kind is LayerKind.FULLY_CONNECTED:
        fin, fout = int(desc["in_features"]), int(desc["out_features"])
        return (fout, fin), (fout,)
    return None


# ── Shape inference ────────────────────────────────────
def output_shape(layer: Layer, in_shape: tuple[int, ...]) -> tuple[int, ...]:
    """Output shape for ``in_shape``; raises ShapeMismatchError if incompatible."""
    in_shape = tuple(int(d) for d in in_shape)
    kind = layer.kind
    if kind is LayerKind.CONV2D:
        k, cin, cout = layer.kernel_size, layer.weights.shape[2], layer.weights.shape[3]
        if len(in_shape) != 3 or in_shape[2] != cin:
            raise ShapeMismatchError(("H", "W", cin), in_shape, layer.index)
        ho = _conv_extent(in_shape[0], k, layer.stride, layer.padding, layer, in_shape)
        wo = _conv_extent(in_shape[1], k, layer.stride, layer.padding, layer, in_shape)
        return (ho, wo, cout)
    if kind is LayerKind.FULLY_CONNECTED:
        if in_shape != (layer.in_features,):
            raise ShapeMismatchError((layer.in_features,), in_shape, layer.index)
        return (layer.out_features,)
    if kind is LayerKind.AVG_POOL:
        if len(in_shape) != 3 or in_shape[0] % 2 or in_shape[1] % 2:
            raise ShapeMismatchError("(even H, even W, C)", in_shape, layer.index)
        return (in_shape[0] // 2, in_shape[1] // 2, in_shape[2])
    if kind is LayerKind.FLATTEN:
        return (int(np.prod(in_shape)),)
    return in_shape


def _conv_extent(n: int, k: int, s: int, p: int, layer: Layer, in_shape: tuple[int, ...]) -> int:
    span = n + 2 * p - k
    if span < 0 or span % s:
        raise ShapeMismatchError(
            f"spatial size with (n + 2*{p} - {k}) divisible by stride {s}", in_shape, layer.index
        )
    return span // s + 1


def _check_input(layer: Layer, x: np.ndarray) -> tuple[int, ...]:
    if layer.input_shape is not None and x.shape != layer.input_shape:
        raise ShapeMismatchError(layer.input_shape, x.shape, layer.index)
    return output_shape(layer, x.shape)


def _check_upstream(layer: Layer, x: np.ndarray, upstream: np.ndarray) -> None:
    expected = _check_input(layer, x)
    if upstream.shape != expected:
        raise ShapeMismatchError(expected, upstream.shape, layer.index, what="upstream gradient")


def _check_mask(layer: Layer, x: np.ndarray, mask: np.ndarray | None) -> None:
    if mask is None:
        return
    if layer.kind is not LayerKind.DROPOUT:
        raise ConfigError(f"dropout mask supplied to {layer.kind.value} layer {layer.index}")
    if mask.shape != x.shape:
        raise ShapeMismatchError(x.shape, mask.shape, layer.index, what="dropout mask")


def _pad(x: np.ndarray, p: int) -> np.ndarray:
    if not p:
        return x
    return np.pad(x, ((p, p), (p, p), (0, 0)))


def _conv_windows(xp: np.ndarray, k: int, s: int) -> np.ndarray:
    # (H_out, W_out, C_in, k, k)
    return sliding_window_view(xp, (k, k), axis=(0, 1))[::s, ::s]


# ── Forward ────────────────────────────────────────────
def forward(layer: Layer, x: np.ndarray, dropout_mask: np.ndarray | None = None) -> np.ndarray:
    """Apply ``layer`` to ``x``.

    A DropoutSite with a binary mask returns ``x * mask / (1 - p)``;
    without a mask it is the identity (deterministic mode).
    """
    x = np.asarray(x, dtype=np.float64)
    _check_input(layer, x)
    _check_mask(layer, x, dropout_mask)
    kind = layer.kind
    if kind is LayerKind.CONV2D:
        k, s = layer.kernel_size, layer.stride
        windows = _conv_windows(_pad(x, layer.padding), k, s)
        return np.einsum("ijcuv,uvcd->ijd", windows, layer.weights) + layer.bias
    if kind is LayerKind.FULLY_CONNECTED:
        return layer.weights @ x + layer.bias
    if kind is LayerKind.RELU:
        return np.where(x > 0.0, x, 0.0)
    if kind is LayerKind.AVG_POOL:
        h, w, c = x.shape
        return x.reshape(h // 2, 2, w // 2, 2, c).mean(axis=(1, 3))
    if kind is LayerKind.FLATTEN:
        return x.reshape(-1).copy()
    if dropout_mask is None:
        return x.copy()
    return x * dropout_mask / (1.0 - layer.drop_p)


# ── Backward ───────────────────────────────────────────
def backward_input(
    layer: Layer,
    x: np.ndarray,
    upstream: np.ndarray,
    dropout_mask: np.ndarray | None = None,
) -> np.ndarray:
    """Transpose-Jacobian product: d(loss)/d(x) given d(loss)/d(layer(x))."""
    x = np.asarray(x, dtype=np.float64)
    g = np.asarray(upstream, dtype=np.float64)
    _check_upstream(layer, x, g)
    _check_mask(layer, x, dropout_mask)
    kind = layer.kind
    if kind is LayerKind.CONV2D:
        k, s, p = layer.kernel_size, layer.stride, layer.padding
        h, w, _ = x.shape
        ho, wo, _ = g.shape
        dxp = np.zeros((h + 2 * p, w + 2 * p, x.shape[2]))
        for u in range(k):
            for v in range(k):
                dxp[u : u + s * (ho - 1) + 1 : s, v : v + s * (wo - 1) + 1 : s, :] += g @ layer.weights[u, v].T
        return dxp[p : p + h, p : p + w, :].copy()
    if kind is LayerKind.FULLY_CONNECTED:
        return layer.weights.T @ g
    if kind is LayerKind.RELU:
        # subgradient 0 at exactly 0
        return np.where(x > 0.0, g, 0.0)
    if kind is LayerKind.AVG_POOL:
        return np.repeat(np.repeat(g, 2, axis=0), 2, axis=1) / 4.0
    if kind is LayerKind.FLATTEN:
        return g.reshape(x.shape).copy()
    if dropout_mask is None:
        return g.copy()
    return g * dropout_mask / (1.0 - layer.drop_p)


def backward_weights(layer: Layer, x: np.ndarray, upstream: np.ndarray) -> ParamGrads:
    """d(loss)/d(weights) and d(loss)/d(bias); empty arrays for weightless layers."""
    x = np.asarray(x, dtype=np.float64)
    g = np.asarray(upstream, dtype=np.float64)
    _check_upstream(layer, x, g)
    kind = layer.kind
    if kind is LayerKind.CONV2D:
        k, s = layer.kernel_size, layer.stride
        xp = _pad(x, layer.padding)
        ho, wo, _ = g.shape
        dw = np.empty_like(layer.weights)
        for u in range(k):
            for v in range(k):
                patch = xp[u : u + s * (ho - 1) + 1 : s, v : v + s * (wo - 1) + 1 : s, :]
                dw[u, v] = np.tensordot(patch, g, axes=([0, 1], [0, 1]))
        return ParamGrads(dw, g.sum(axis=(0, 1)))
    if kind is LayerKind.FULLY_CONNECTED:
        return ParamGrads(np.outer(g, x), g.copy())
    return ParamGrads(np.empty(0), np.empty(0))
