"""Image files (binary PPM, PNG) and the ryg-v1 heatmap renderer.

Intensities are float64 in [0, 1] in memory and 8-bit on disk; reading
divides by 255 and writing quantizes with round-half-up of value·255.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import structlog
from PIL import Image

from .constants import COLORMAP_ID, IMAGE_SUFFIXES
from .errors import ConfigError, DataError, ImageFormatError, NonFiniteError
from .plq import PlqMap

logger = structlog.get_logger()

PPM_MAGIC = b"P6"
PNG_MAGIC = b"\x89PNG\r\n\x1a\n"
PPM_MAXVAL = 255
_WHITESPACE = b" \t\n\r\x0b\x0c"


@dataclass(frozen=True, eq=False)
class RenderedMap:
    pixels: np.ndarray
    colormap_id: str = COLORMAP_ID


# ── PPM ────────────────────────────────────────────────
def _next_token(data: bytes, pos: int) -> tuple[bytes, int, int]:
    """Skip whitespace and comments; return (token, token_offset, end)."""
    n = len(data)
    while pos < n:
        if data[pos] in _WHITESPACE:
            pos += 1
        elif data[pos : pos + 1] == b"#":
            while pos < n and data[pos] not in b"\r\n":
                pos += 1
        else:
            break
    start = pos
    while pos < n and data[pos] not in _WHITESPACE and data[pos : pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise ImageFormatError("truncated PPM header", start)
    return data[start:pos], start, pos


def _header_int(data: bytes, pos: int, what: str) -> tuple[int, int, int]:
    token, offset, end = _next_token(data, pos)
    if not token.isdigit():
        raise ImageFormatError(f"PPM {what} is not a decimal integer: {token[:16]!r}", offset)
    return int(token), offset, end


def decode_ppm(data: bytes) -> np.ndarray:
    """Binary P6 with maxval 255 → H×W×3 uint8."""
    if data[:2] != PPM_MAGIC:
        raise ImageFormatError("not a binary PPM (expected magic P6)", 0)
    width, w_off, pos = _header_int(data, 2, "width")
    height, h_off, pos = _header_int(data, pos, "height")
    maxval, m_off, pos = _header_int(data, pos, "maxval")
    if width < 1:
        raise ImageFormatError(f"PPM width must be positive, got {width}", w_off)
    if height < 1:
        raise ImageFormatError(f"PPM height must be positive, got {height}", h_off)
    if maxval != PPM_MAXVAL:
        raise ImageFormatError(f"unsupported PPM maxval {maxval}; only {PPM_MAXVAL} is supported", m_off)
    if pos >= len(data) or data[pos] not in _WHITESPACE:
        raise ImageFormatError("missing whitespace after PPM maxval", pos)
    start = pos + 1
    expected = width * height * 3
    raster = data[start:]
    if len(raster) != expected:
        raise ImageFormatError(f"PPM raster: expected {expected} bytes, got {len(raster)}", start)
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3).copy()


def encode_ppm(pixels: np.ndarray) -> bytes:
    h, w, _ = pixels.shape
    return f"P6\n{w} {h}\n{PPM_MAXVAL}\n".encode("ascii") + np.ascontiguousarray(pixels, dtype=np.uint8).tobytes()


# ── PNG ────────────────────────────────────────────────
def decode_png(data: bytes) -> np.ndarray:
    try:
        with Image.open(io.BytesIO(data)) as img:
            if img.info.get("interlace"):
                raise ImageFormatError("interlaced PNG is not supported", 0)
            return np.asarray(img.convert("RGB"), dtype=np.uint8).copy()
    except (OSError, SyntaxError, ValueError) as exc:
        raise ImageFormatError(f"unreadable PNG: {exc}", 0) from exc


def encode_png(pixels: np.ndarray) -> bytes:
    buffer = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(pixels, dtype=np.uint8)).save(buffer, format="PNG")
    return buffer.getvalue()


# ── Public API ─────────────────────────────────────────
def quantize(image: np.ndarray) -> np.ndarray:
    """[0, 1] floats → uint8 with round-half-up; out-of-range values are clipped."""
    image = np.asarray(image, dtype=np.float64)
    if not np.all(np.isfinite(image)):
        raise NonFiniteError("image contains NaN or Inf")
    if image.ndim == 2:
        image = image[..., None]
    if image.ndim != 3 or image.shape[2] not in (1, 3):
        raise DataError(f"expected an H×W×3 or H×W×1 image, got shape {image.shape}")
    if image.shape[2] == 1:
        image = np.repeat(image, 3, axis=2)
    return np.floor(np.clip(image, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def read_pixels(path: str | Path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"image file not found: {path}")
    data = path.read_bytes()
    if data.startswith(PNG_MAGIC):
        return decode_png(data)
    if data.startswith(PPM_MAGIC):
        return decode_ppm(data)
    raise ImageFormatError(f"unrecognized image format in {path.name}", 0)


def read_image(path: str | Path) -> np.ndarray:
    """H×W×3 float64 in [0, 1]."""
    return read_pixels(path).astype(np.float64) / 255.0


def write_pixels(pixels: np.ndarray, path: str | Path) -> Path:
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".ppm":
        payload = encode_ppm(pixels)
    elif suffix == ".png":
        payload = encode_png(pixels)
    else:
        raise ConfigError(f"unsupported image suffix {path.suffix!r}; use one of {', '.join(IMAGE_SUFFIXES)}")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(payload)
    return path


def write_image(image: np.ndarray, path: str | Path) -> Path:
    return write_pixels(quantize(image), path)


def list_images(directory: str | Path) -> list[tuple[str, Path]]:
    """(image_id, path) for every PPM/PNG in ``directory``, sorted by name."""
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"not a directory: {directory}")
    files = sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES and p.is_file())
    return [(p.stem, p) for p in files]


def load_corpus(directory: str | Path) -> list[tuple[str, np.ndarray]]:
    corpus = [(image_id, read_image(path)) for image_id, path in list_images(directory)]
    logger.debug("Corpus loaded", directory=str(directory), images=len(corpus))
    return corpus


# ── Heatmap ────────────────────────────────────────────
def render_values(values: np.ndarray) -> np.ndarray:
    """ryg-v1: red at 0, yellow at 0.5, green towards 1."""
    v = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(v)) or np.any(v < 0.0) or np.any(v >= 1.0):
        raise DataError("pixel qualities must lie in [0, 1) for rendering")
    low = v <= 0.5
    red = np.where(low, 255.0, np.floor(510.0 * (1.0 - v) + 0.5))
    green = np.where(low, np.floor(510.0 * v + 0.5), 255.0)
    return np.stack([red, green, np.zeros_like(v)], axis=-1).astype(np.uint8)


def render_heatmap(plq: PlqMap | np.ndarray) -> RenderedMap:
    values = plq.values if isinstance(plq, PlqMap) else plq
    return RenderedMap(pixels=render_values(values), colormap_id=COLORMAP_ID)


def write_rendered(rendered: RenderedMap, path: str | Path) -> Path:
    return write_pixels(rendered.pixels, path)
