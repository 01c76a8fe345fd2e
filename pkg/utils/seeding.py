"""
Seeding
Hierarchical seed derivation from a single master seed
"""

import zlib
import numpy as np


def stage_seed(master_seed: int, *path) -> int:
    """
    Derive a reproducible 32-bit seed for a named stage

    Args:
        master_seed: Run-level master seed
        *path: Stage names or integer indices, e.g. ("csq", 3, "simulate")

    Returns:
        Integer seed, identical for identical (master_seed, path)
    """
    key = tuple(
        item if isinstance(item, (int, np.integer)) else zlib.crc32(str(item).encode())
        for item in path
    )
    sequence = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in key))
    return int(sequence.generate_state(1, dtype=np.uint32)[0])


def block_rng(seed: int, block: int) -> np.random.Generator:
    """Independent generator for a block of simulated histories"""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(block),)))
