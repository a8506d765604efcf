"""Deterministic RNG streams keyed by a base seed plus string labels."""
from __future__ import annotations

import binascii

import numpy as np


def child_rng(seed: int, *labels) -> np.random.Generator:
    """Independent generator for (seed, labels), stable across call sites.

    Labels are hashed with crc32 into a spawn key, so adding an unrelated
    consumer (a new diagnostic, another dataset sample) never shifts the
    streams that existing consumers see.
    """
    key = tuple(binascii.crc32(str(lab).encode()) for lab in labels)
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))
