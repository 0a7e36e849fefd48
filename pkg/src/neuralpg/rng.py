"""Counter-based random streams derived from one master seed.

``make_rng(seed, "critic", 3)`` and ``make_rng(seed, "actor", 3)`` are
independent Philox streams; the same arguments always give the same stream.
"""

import zlib

import numpy as np


def _key(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part)
    return zlib.crc32(str(part).encode())


def make_rng(seed: int, *stream) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_key(p) for p in stream))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *stream) -> int:
    """A 63-bit integer seed for a named sub-stream, for APIs that take ints."""
    return int(make_rng(seed, *stream).integers(2**63 - 1))
