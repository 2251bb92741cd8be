"""Deterministic substream seeds.

Every random stream in the package is keyed by ``(master_seed, tag, index)``
and mapped to a 64-bit seed through SplitMix64. The constants below are part
of the output format: changing any of them changes every simulated path.
"""
import hashlib

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
SEED_SCHEME_VERSION = 1


def splitmix64(x):
    x = (x + GOLDEN_GAMMA) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def _tag_hash(tag):
    digest = hashlib.blake2b(tag.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def derive_seed(master_seed, tag, index=0):
    """Return a 64-bit seed for substream ``index`` of purpose ``tag``.

    >>> derive_seed(7, "replica", 0) == derive_seed(7, "replica", 0)
    True
    >>> derive_seed(7, "replica", 0) != derive_seed(7, "replica", 1)
    True
    """
    h = splitmix64(int(master_seed) & MASK64)
    h = splitmix64(h ^ _tag_hash(str(tag)))
    return splitmix64(h ^ (int(index) & MASK64))


def make_rng(master_seed, tag, index=0):
    return np.random.Generator(np.random.PCG64(derive_seed(master_seed, tag, index)))
