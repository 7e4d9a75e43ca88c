"""Deterministic derivation of per-purpose random streams from one run seed.

Every stochastic stage (synthesis, weight init, pair sampling, noise) draws
from its own stream keyed by a purpose tag, so stages can be rerun
independently without perturbing each other. Derivation: the run seed XORed
with the first 8 bytes of SHA-256 of the tag, masked to 63 bits.
"""

import hashlib

import numpy as np


def derive_seed(seed: int, tag: str) -> int:
    digest = hashlib.sha256(tag.encode("utf-8")).digest()
    return (seed ^ int.from_bytes(digest[:8], "little")) & 0x7FFF_FFFF_FFFF_FFFF


def derive_rng(seed: int, tag: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, tag))
