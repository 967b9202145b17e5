"""Deterministic derivation of per-purpose random streams from one base seed.

Every source of randomness in a run flows from a single 64-bit seed. Child
seeds are derived by hashing the base seed together with a purpose label
(e.g. ("question", 3, "rep", 0)), so adding draws to one consumer can never
shift the stream seen by another.
"""

from __future__ import annotations

import hashlib
import random

_SEED_BYTES = 8


def derive_seed(base_seed: int, *labels: object) -> int:
    """Return a 64-bit child seed for the given purpose labels."""
    h = hashlib.sha256()
    h.update(str(int(base_seed)).encode("utf-8"))
    for label in labels:
        h.update(b"\x1f")
        h.update(repr(label).encode("utf-8"))
    return int.from_bytes(h.digest()[:_SEED_BYTES], "big")


def derive_rng(base_seed: int, *labels: object) -> random.Random:
    """Return a seeded random source for the given purpose labels."""
    return random.Random(derive_seed(base_seed, *labels))
