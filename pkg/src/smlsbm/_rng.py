"""Seed derivation.

Every random stream is a Philox generator keyed by ``(seed, *keys)`` through
``SeedSequence``, so a stream depends only on its keys and never on call
order or worker count.
"""
from __future__ import annotations

import zlib

import numpy as np


def _as_int(key) -> int:
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError("seed keys must be nonnegative")
        return int(key)
    return zlib.crc32(str(key).encode())


def derive_rng(seed: int, *keys) -> np.random.Generator:
    entropy = [_as_int(seed)] + [_as_int(k) for k in keys]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def derive_seed(seed: int, *keys) -> int:
    entropy = [_as_int(seed)] + [_as_int(k) for k in keys]
    return int(np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint32)[0])
