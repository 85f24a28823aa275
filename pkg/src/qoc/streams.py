"""Reproducible random streams keyed by integer coordinates.

A stream is a pure function of ``(seed, *key)``, so replicates can be spread
over any number of workers without changing results.
"""

import numpy as np

# Q-runners vectorize over fixed-size replicate blocks; the block index is the
# stream coordinate, so this constant is part of the reproducibility contract.
Q_BLOCK = 4096

MAX_SEED = 2**64 - 1


def stream(seed, *key):
    if not 0 <= int(seed) <= MAX_SEED:
        raise ValueError("seed must be an unsigned 64-bit integer")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def blocks(n, size):
    """Yield ``(index, start, stop)`` triples covering ``range(n)``."""
    for b, start in enumerate(range(0, n, size)):
        yield b, start, min(start + size, n)
