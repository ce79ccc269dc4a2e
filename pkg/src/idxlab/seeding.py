"""Deterministic sub-seed derivation.

Every random decision in the package flows from an explicit seed through
numpy's SeedSequence. String parts are folded in via crc32 so derivation never
depends on Python's salted hash().
"""

import zlib

import numpy as np

_MASK = 0xFFFFFFFFFFFFFFFF


def subseed(*parts) -> int:
    """Fold (int | str) parts into one 64-bit seed, deterministically."""
    entropy = []
    for p in parts:
        if isinstance(p, str):
            entropy.append(zlib.crc32(p.encode("utf-8")))
        else:
            entropy.append(int(p) & _MASK)
    return int(np.random.SeedSequence(entropy).generate_state(1, np.uint64)[0])


def rng_for(*parts) -> np.random.Generator:
    return np.random.default_rng(subseed(*parts))
