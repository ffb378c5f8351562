"""Counter-based random streams.

Every stream is a Philox generator keyed by a root seed and a tuple of integer keys,
e.g. ``(seed, cell, replicate)``. Streams with different keys are independent and a
stream never depends on the order in which others were created, so parallel
replicates reproduce exactly.
"""

import numpy as np


def stream(seed: int, *keys: int) -> np.random.Generator:
    """Return the generator for stream ``(seed, *keys)``."""
    if seed < 0 or any(key < 0 for key in keys):
        raise ValueError(f"seed and keys must be non-negative, got {(seed, *keys)}")
    sequence = np.random.SeedSequence(seed, spawn_key=tuple(keys))
    return np.random.Generator(np.random.Philox(sequence))


def child_seed(seed: int, *keys: int) -> int:
    """Derive a 63-bit integer seed for stream ``(seed, *keys)``."""
    sequence = np.random.SeedSequence(seed, spawn_key=tuple(keys))
    high, low = sequence.generate_state(2, dtype=np.uint32)
    return (int(high) << 31) ^ int(low)
