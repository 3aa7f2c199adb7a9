"""Seeded random streams keyed by (seed, index, ...).

Every replicate of an experiment or bootstrap draws from its own stream, so
results do not depend on execution order or worker count.
"""

import numpy as np


def substream(seed: int, *keys: int) -> np.random.Generator:
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF, *(int(k) for k in keys)]
    return np.random.default_rng(np.random.SeedSequence(entropy))
