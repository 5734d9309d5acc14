"""Counter-based random streams.

Every random draw in the solver comes from a Philox generator keyed by a
tuple of integers (seed, step, channel, ...).  A given key always yields the
same stream no matter how many streams were created before it, so results
do not depend on call order or on the number of worker threads.
"""

from __future__ import annotations

import numpy as np

# stream tags keep unrelated consumers apart
INIT, PAIR_SCAN, FROZEN, POLY, POVZNER, QUAD, FIT = range(7)


def stream(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return stream(0 if rng is None else int(rng))
