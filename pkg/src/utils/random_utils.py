"""Seed helpers.

Every stochastic stage takes an explicit integer seed. Sub-streams are derived
from (seed, key...) so results do not depend on the order work is scheduled.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key_int(key) -> int:
    if isinstance(key, (int, np.integer)):
        return int(key) & 0xFFFFFFFF
    return zlib.crc32(str(key).encode("utf-8"))


def derive_seed(seed: int, *keys) -> int:
    """Stable 63-bit seed for the sub-task identified by `keys`."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF] + [_key_int(k) for k in keys])
    hi, lo = (int(v) for v in ss.generate_state(2, dtype=np.uint32))
    return ((hi << 31) ^ lo) & 0x7FFFFFFFFFFFFFFF


def rng_for(seed: int, *keys) -> np.random.Generator:
    if not keys:
        return np.random.default_rng(int(seed))
    return np.random.default_rng(derive_seed(seed, *keys))
