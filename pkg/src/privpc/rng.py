"""Seed splitting.

Every mechanism invocation gets its own generator, derived from the run
seed and a tuple of integer/str keys through ``numpy.random.SeedSequence``
(which hashes the entropy together with the spawn key). Identical
``(seed, keys)`` always give identical streams; distinct keys give
statistically independent ones.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key_to_int(key: int | str) -> int:
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError(f"negative rng key: {key}")
        return int(key)
    return zlib.crc32(str(key).encode("utf-8"))


def derive_rng(seed: int, *keys: int | str) -> np.random.Generator:
    """Return a generator for ``seed`` split along ``keys``."""
    seq = np.random.SeedSequence(int(seed), spawn_key=tuple(_key_to_int(k) for k in keys))
    return np.random.default_rng(seq)


def derive_seed(seed: int, *keys: int | str) -> int:
    """Return a 63-bit integer seed split from ``seed`` along ``keys``."""
    seq = np.random.SeedSequence(int(seed), spawn_key=tuple(_key_to_int(k) for k in keys))
    hi, lo = (int(x) for x in seq.generate_state(2, dtype=np.uint32))
    return ((hi << 32) | lo) >> 1
