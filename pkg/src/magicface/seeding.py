"""Stable seed derivation so independent pipeline stages never share RNG streams."""

from __future__ import annotations

import hashlib


def derive_seed(seed: int, *labels) -> int:
    """Map (seed, labels...) to a 63-bit child seed, stable across platforms."""
    text = repr((int(seed),) + tuple(labels)).encode("utf-8")
    digest = hashlib.sha256(text).digest()
    return int.from_bytes(digest[:8], "little") & 0x7FFF_FFFF_FFFF_FFFF
