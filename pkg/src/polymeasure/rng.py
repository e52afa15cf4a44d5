"""Seeded random streams.

All randomness comes from one 64-bit seed.  Streams are numpy ``Philox``
(counter-based, 4x64-10) generators keyed through ``SeedSequence``; independent
child streams are derived with ``SeedSequence.spawn``, so per-image draws do not
depend on processing order or thread count.
"""
from __future__ import annotations

import numpy as np


def make_generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def spawn_generators(seed: int, n: int) -> list[np.random.Generator]:
    children = np.random.SeedSequence(int(seed)).spawn(n)
    return [np.random.Generator(np.random.Philox(c)) for c in children]
