"""Named random sub-streams derived from one root seed."""
from __future__ import annotations

import zlib

import numpy as np


def stream_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def substream(root_seed: int, name: str) -> np.random.Generator:
    """Independent generator for component ``name``; same inputs, same stream."""
    return np.random.default_rng([int(root_seed), stream_key(name)])


def subseed(root_seed: int, name: str) -> int:
    """A 31-bit integer seed for libraries that want an int (sklearn)."""
    return int(substream(root_seed, name).integers(0, 2**31 - 1))
