"""Named random substreams derived from a single master seed.

Every consumer of randomness asks for a stream by name (plus optional integer
keys), so adding a consumer never shifts the draws seen by the others.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _name_key(name: str) -> int:
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def substream(seed: int, name: str, *keys: int) -> np.random.Generator:
    """Return an independent generator keyed by ``(seed, name, *keys)``."""
    entropy = [seed & _MASK64, _name_key(name)]
    entropy.extend(int(k) & _MASK64 for k in keys)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
