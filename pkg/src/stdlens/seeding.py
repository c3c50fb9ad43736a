"""Seed derivation.

Every random draw in the system flows from a single 64-bit master seed
through a keyed hash, so any (purpose, client, round) stream can be
re-created independently of execution order.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

__all__ = ["derive_seed", "make_rng"]


def derive_seed(master_seed: int, tag: str, *indices: int) -> int:
    """Derive a 64-bit child seed from (master_seed, tag, indices)."""
    h = hashlib.blake2b(digest_size=8)
    h.update(struct.pack("<Q", master_seed & 0xFFFFFFFFFFFFFFFF))
    h.update(tag.encode("utf-8"))
    for idx in indices:
        h.update(struct.pack("<q", idx))
    return int.from_bytes(h.digest(), "little")


def make_rng(master_seed: int, tag: str, *indices: int) -> np.random.Generator:
    """A fresh generator for one (purpose, indices) stream."""
    return np.random.default_rng(derive_seed(master_seed, tag, *indices))
