"""Named, independent random substreams.

Every source of randomness in a run (data split, weight init, dropout,
batch shuffle, quantile-level sampling, slab directions) draws from its
own substream so that toggling one feature never shifts another's draws.
"""
import zlib

import numpy as np


def substream(seed: int, name: str) -> np.random.Generator:
    """Generator keyed by (seed, name), stable across processes and runs."""
    return np.random.default_rng(np.random.SeedSequence([seed, zlib.crc32(name.encode("utf-8"))]))
