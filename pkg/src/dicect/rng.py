"""Named random streams split from one root seed."""

import zlib

import numpy as np


def stream(seed, name, *keys):
    """Generator for stream ``name``; ``keys`` (e.g. an image index) subdivide it.

    Streams with different names or keys are statistically independent, so
    changing how many draws one stream makes never shifts another.
    """
    spawn_key = (zlib.crc32(name.encode()),) + tuple(int(k) for k in keys)
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=spawn_key))
