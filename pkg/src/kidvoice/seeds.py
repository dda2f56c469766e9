"""Named random substreams derived from one root seed."""

from __future__ import annotations

import zlib

import numpy as np


def derive_seed(root: int, *names: str) -> int:
    """Stable 63-bit seed for the substream ``names`` under ``root``."""
    key = tuple(zlib.crc32(n.encode("utf-8")) for n in names)
    state = np.random.SeedSequence(int(root), spawn_key=key).generate_state(2, dtype=np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1]))


def substream(root: int, *names: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root, *names))
