"""
Namespaced random number generation.

All randomness flows from one integer seed. Each consumer (split, init,
augment, shuffle, synth) draws from its own stream so adding a consumer never
shifts the draws of another.
"""

import zlib

import numpy as np


def _seed_sequence(seed: int, namespace: str, *keys: int) -> np.random.SeedSequence:
    tag = zlib.crc32(namespace.encode("utf-8"))
    return np.random.SeedSequence(entropy=int(seed), spawn_key=(tag, *(int(k) for k in keys)))


def make_rng(seed: int, namespace: str, *keys: int) -> np.random.Generator:
    """
    Create a generator for one consumer of the run seed.

    Args:
        seed: Run seed
        namespace: Consumer name, e.g. "split" or "augment"
        *keys: Extra integer keys, e.g. (epoch, sample_index)

    Returns:
        Independent numpy Generator
    """
    return np.random.default_rng(_seed_sequence(seed, namespace, *keys))


def derive_seed(seed: int, namespace: str, *keys: int) -> int:
    """Derive a 32-bit integer seed for a consumer that takes plain ints."""
    return int(_seed_sequence(seed, namespace, *keys).generate_state(1)[0])
