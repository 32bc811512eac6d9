"""Deterministic random streams.

All randomness goes through numpy's Philox-4x64 counter-based generator
(10 rounds). The 128-bit key is ``(seed << 64) | stream``, so a given
``(seed, stream)`` pair always yields the same draws regardless of how
many other streams were used before it. Training uses ``stream = step``.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    key = ((int(seed) & _MASK64) << 64) | (int(stream) & _MASK64)
    return np.random.Generator(np.random.Philox(key=key))
