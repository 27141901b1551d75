"""Exception hierarchy. Every error knows the CLI exit code it maps to."""

from __future__ import annotations

from typing import Sequence

from .constants import EXIT_DATA, EXIT_NUMERIC, EXIT_USAGE


class PlqError(Exception):
    """Base class for all plqlab errors."""

    exit_code = EXIT_DATA


# ── Usage / configuration ──────────────────────────────
class ConfigError(PlqError, ValueError):
    """A parameter value is outside its allowed range."""

    exit_code = EXIT_USAGE


# ── Data / format ──────────────────────────────────────
class DataError(PlqError):
    exit_code = EXIT_DATA


class ShapeMismatchError(DataError):
    """A tensor reached a layer (or operation) with the wrong shape."""

    def __init__(
        self,
        expected: Sequence[int] | str,
        actual: Sequence[int],
        layer_index: int | None = None,
        what: str = "input",
    ) -> None:
        self.expected = tuple(expected) if not isinstance(expected, str) else expected
        self.actual = tuple(actual)
        self.layer_index = layer_index
        where = f"layer {layer_index}" if layer_index is not None else "operation"
        super().__init__(
            f"{where}: {what} shape mismatch, expected {self.expected}, got {self.actual}"
        )


class _OffsetError(DataError):
    def __init__(self, message: str, offset: int) -> None:
        self.offset = offset
        super().__init__(f"{message} (byte offset {offset})")


class WeightFileError(_OffsetError):
    """Malformed weight file."""


class ImageFormatError(_OffsetError):
    """Malformed or unsupported image file."""


class RegionError(DataError):
    """A pixel region is empty, out of bounds or infeasible."""


class DatasetError(DataError):
    """A training or experiment corpus cannot be used."""


# ── Numeric failures ───────────────────────────────────
class NumericError(PlqError):
    exit_code = EXIT_NUMERIC


class NonFiniteError(NumericError):
    """NaN or Inf where finite values are required."""


class ZeroEmbeddingError(NumericError):
    """The image produced a null representation (‖e‖₁ = 0)."""

    def __init__(self) -> None:
        super().__init__(
            "the image produced a null representation (zero embedding); "
            "the quality head cannot be built"
        )


class ZeroVarianceError(NumericError):
    """Calibration set has no spread."""

    def __init__(self) -> None:
        super().__init__(
            "development qualities have zero variance; set --alpha manually"
        )


class ZeroReferenceError(NumericError):
    """Gamma calibration references carry no saliency inside the face box."""
