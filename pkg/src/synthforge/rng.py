"""Counter-based substream derivation.

Every random draw in the toolkit comes from a Philox generator keyed by
blake2b(seed | index | tag). Substreams are therefore independent and
order-independent: drawing for scene 7's lights never consumes state from
scene 3's placement stream, so scenes can be sampled in any order or in
parallel with identical results.
"""

from __future__ import annotations

import hashlib

import numpy as np


def substream(seed: int, index: int, tag: str) -> np.random.Generator:
    """Derive an independent generator for one (seed, index, tag) triple."""
    digest = hashlib.blake2b(
        f"{seed}|{index}|{tag}".encode(), digest_size=16
    ).digest()
    key = np.frombuffer(digest, dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
