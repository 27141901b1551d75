"""Seed derivation. Every random stream is a pure function of (seed, keys)."""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def key_of(value: int | str) -> int:
    """Map an int or string key to a nonnegative integer entropy word."""
    if isinstance(value, str):
        digest = hashlib.blake2b(value.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "little")
    return int(value) & _MASK64


def derive_rng(seed: int, *keys: int | str) -> np.random.Generator:
    """Independent generator for the stream hash(seed, *keys)."""
    entropy = [key_of(seed), *(key_of(k) for k in keys)]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def derive_seed(seed: int, *keys: int | str) -> int:
    """A u64 seed for the stream hash(seed, *keys)."""
    entropy = [key_of(seed), *(key_of(k) for k in keys)]
    return int(np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint64)[0])
