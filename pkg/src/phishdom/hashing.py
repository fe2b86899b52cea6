"""Stable string hashing used for node bucketing and group assignment.

FNV-1a in its 64-bit variant: process-independent, dependency-free, and fast
enough for per-token use. Both the feature hasher and the partitioner must
agree on this function, so it lives in one place.
"""

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a_64(text: str) -> int:
    """Hash a string to an unsigned 64-bit integer (FNV-1a over UTF-8 bytes)."""
    h = FNV64_OFFSET
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * FNV64_PRIME) & _MASK64
    return h
