"""Bit-exact weight files.

Layout::

    b"PLQM" | version u32 LE | header_len u32 LE | header (UTF-8 JSON) | payload

The payload concatenates, for every weighted layer in order, its weights
then its bias as row-major little-endian float64.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Any

import numpy as np
import structlog

from ..constants import WEIGHT_MAGIC, WEIGHT_VERSION
from ..errors import ConfigError, DataError, ShapeMismatchError, WeightFileError
from ..numgrad.layers import declared_param_shapes, layer_from_description
from .model import EmbeddingModel

logger = structlog.get_logger()

_PREAMBLE = struct.Struct("<4sII")
_FLOAT = np.dtype("<f8")


def encode(model: EmbeddingModel) -> bytes:
    header = {
        "architecture": model.architecture,
        "input_shape": list(model.input_shape),
        "embedding_dim": model.embedding_dim,
        "dropout_p": model.dropout_p,
        "layers": [layer.describe() for layer in model.layers],
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    chunks = []
    for weights, bias in model.parameters():
        chunks.append(np.ascontiguousarray(weights, dtype=_FLOAT).tobytes())
        chunks.append(np.ascontiguousarray(bias, dtype=_FLOAT).tobytes())
    return _PREAMBLE.pack(WEIGHT_MAGIC, WEIGHT_VERSION, len(header_bytes)) + header_bytes + b"".join(chunks)


def decode(data: bytes) -> EmbeddingModel:
    if len(data) < _PREAMBLE.size:
        raise WeightFileError(
            f"file too short for preamble: expected {_PREAMBLE.size} bytes, got {len(data)}", len(data)
        )
    magic, version, header_len = _PREAMBLE.unpack_from(data, 0)
    if magic != WEIGHT_MAGIC:
        raise WeightFileError(f"bad magic {magic!r}, expected {WEIGHT_MAGIC!r}", 0)
    if version != WEIGHT_VERSION:
        raise WeightFileError(f"unsupported version {version}, expected {WEIGHT_VERSION}", 4)
    start = _PREAMBLE.size
    if start + header_len > len(data):
        raise WeightFileError(
            f"header length {header_len} exceeds file size {len(data)}", 8
        )
    try:
        header: dict[str, Any] = json.loads(data[start : start + header_len].decode("utf-8"))
        descriptions = header["layers"]
        input_shape = tuple(int(d) for d in header["input_shape"])
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise WeightFileError(f"malformed header: {exc}", start) from exc
    if not isinstance(descriptions, list):
        raise WeightFileError(f"header 'layers' must be a list, got {type(descriptions).__name__}", start)

    shapes = []
    for i, desc in enumerate(descriptions):
        if not isinstance(desc, dict):
            raise WeightFileError(f"layer {i} description must be an object, got {type(desc).__name__}", start)
        try:
            param_shapes = declared_param_shapes(desc)
            implied = 0 if param_shapes is None else sum(int(np.prod(s)) for s in param_shapes)
            declared = int(desc.get("weight_count", implied))
        except (KeyError, TypeError, ValueError) as exc:
            raise WeightFileError(f"malformed description for layer {i}: {exc}", start) from exc
        if declared != implied:
            raise WeightFileError(
                f"layer {i} declares {declared} weights but its shape implies {implied}", start
            )
        shapes.append(param_shapes)

    payload_start = start + header_len
    expected = 8 * sum(sum(int(np.prod(s)) for s in ps) for ps in shapes if ps is not None)
    actual = len(data) - payload_start
    if actual != expected:
        raise WeightFileError(
            f"payload length mismatch: expected {expected} bytes, got {actual}", payload_start
        )

    offset = payload_start
    layers = []
    for i, (desc, param_shapes) in enumerate(zip(descriptions, shapes)):
        arrays = []
        for shape in param_shapes or ():
            count = int(np.prod(shape))
            arrays.append(np.frombuffer(data, dtype=_FLOAT, count=count, offset=offset).reshape(shape))
            offset += 8 * count
        try:
            layers.append(layer_from_description(desc, *arrays))
        except (KeyError, TypeError, ValueError, ShapeMismatchError) as exc:
            raise WeightFileError(f"invalid layer {i}: {exc}", start) from exc
    try:
        return EmbeddingModel(
            layers=tuple(layers),
            input_shape=input_shape,
            architecture=str(header.get("architecture", "custom")),
        )
    except (ConfigError, ShapeMismatchError) as exc:
        raise WeightFileError(f"inconsistent layer chain: {exc}", start) from exc


def save(model: EmbeddingModel, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode(model))
    logger.info("Model saved", path=str(path), weights=sum(l.weight_count for l in model.layers))
    return path


def load(path: str | Path) -> EmbeddingModel:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"model file not found: {path}")
    model = decode(path.read_bytes())
    logger.debug("Model loaded", path=str(path), architecture=model.architecture)
    return model
