"""Seeded random-stream derivation.

A single 64-bit seed is split into independent named substreams so that the
generator used for, say, model init cannot perturb the one used for SVD
sketching or random walks. Derivation is a hash of (seed, name), which keeps
streams stable across runs and independent of call order.
"""

import hashlib

import numpy as np


def derive_seed(seed: int, name: str) -> int:
    """Map (seed, name) to a 64-bit substream seed."""
    digest = hashlib.sha256(f"{seed & 0xFFFFFFFFFFFFFFFF}:{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for the named substream of a master seed."""
    return np.random.default_rng(derive_seed(seed, name))
