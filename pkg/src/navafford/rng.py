"""Seed derivation for byte-stable datasets.

Every random stream is a PCG64 generator seeded through numpy's
``SeedSequence`` with the user seed as entropy and a tuple of integers as
spawn key. Both PCG64 and the SeedSequence hashing are fixed, documented
algorithms, so the same ``(seed, *keys)`` yields the same draws on any
platform and in any process.
"""

from __future__ import annotations

import zlib

import numpy as np

MASK64 = (1 << 64) - 1


def stream_tag(name: str) -> int:
    """Stable integer tag for a named stream (never use builtin ``hash``)."""
    return zlib.crc32(name.encode("utf-8"))


def derive_rng(seed: int, *keys: int | str) -> np.random.Generator:
    spawn_key = tuple(stream_tag(k) if isinstance(k, str) else int(k) & MASK64 for k in keys)
    ss = np.random.SeedSequence(entropy=int(seed) & MASK64, spawn_key=spawn_key)
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(seed: int, *keys: int | str) -> int:
    """A 64-bit child seed, for handing to functions that take an integer seed."""
    return int(derive_rng(seed, *keys).integers(0, 2**63 - 1, dtype=np.int64))
