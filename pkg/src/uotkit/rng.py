"""Seeded randomness.

All randomness in the toolkit flows from a single 64-bit seed through
numpy's Philox generator (counter-based, splittable, stable across
platforms). Independent streams are derived by putting a stable label
hash and an integer tag into the counter words, so stream identity does
not depend on iteration order.
"""

from __future__ import annotations

import numpy as np

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def fnv1a64(text: str) -> int:
    """FNV-1a hash of a UTF-8 string, 64-bit."""
    h = _FNV_OFFSET
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def stream(seed: int, label: str = "", tag: int = 0) -> np.random.Generator:
    """Generator for the (seed, label, tag) stream.

    Same arguments always give the same stream, independent of the order
    streams are created in.
    """
    counter = [fnv1a64(label), tag & 0xFFFFFFFFFFFFFFFF, 0, 0]
    return np.random.Generator(np.random.Philox(key=seed & 0xFFFFFFFFFFFFFFFF, counter=counter))
