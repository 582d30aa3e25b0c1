"""Seeded random number generation with cross-platform stable streams."""

import numpy as np

__all__ = ["make_rng", "child_seed"]


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Return a Generator on the Philox4x64-10 counter-based bit stream.

    Philox is keyed, not state-seeded, so (seed, stream) pairs give
    independent, platform-stable streams.  Normal variates come from
    numpy's ziggurat implementation of ``standard_normal``, which is part
    of the frozen Generator API; identical (seed, stream) pairs therefore
    reproduce bit-identical draws everywhere.
    """
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF), np.uint64(stream)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def child_seed(seed: int, index: int) -> int:
    """Derive a decorrelated 64-bit child seed (splitmix64 finalizer)."""
    z = (seed + 0x9E3779B97F4A7C15 * (index + 1)) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return (z ^ (z >> 31)) & 0xFFFFFFFFFFFFFFFF
