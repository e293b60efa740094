"""Deterministic seed derivation.

All stochastic components draw from numpy PCG64 generators keyed by integer
seed paths. String path segments are folded in via CRC32 so derivation never
depends on Python's randomized string hashing.
"""

from __future__ import annotations

import zlib

import numpy as np


def _keys(parts: tuple) -> list[int]:
    keys = []
    for part in parts:
        if isinstance(part, (int, np.integer)):
            keys.append(int(part) & 0xFFFFFFFF)
        else:
            keys.append(zlib.crc32(str(part).encode()))
    return keys


def rng_for(*parts) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(_keys(parts))))


def derive_seed(*parts) -> int:
    return int(np.random.SeedSequence(_keys(parts)).generate_state(1, np.uint64)[0])
