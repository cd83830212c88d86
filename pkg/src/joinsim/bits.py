"""Bitmask helpers for table subsets.

Subsets of alias slots are passed around as plain ints, one bit per global
slot index.
"""

from __future__ import annotations

from collections.abc import Iterable, Iterator


def mask_of(bits: Iterable[int]) -> int:
    m = 0
    for b in bits:
        m |= 1 << b
    return m


def bit_list(mask: int) -> list[int]:
    """Set bit positions of mask, ascending."""
    out = []
    while mask:
        low = mask & -mask
        out.append(low.bit_length() - 1)
        mask ^= low
    return out


def iter_submasks(mask: int) -> Iterator[int]:
    """Proper non-empty submasks of mask, descending."""
    sub = (mask - 1) & mask
    while sub:
        yield sub
        sub = (sub - 1) & mask


def subsets_by_size(full: int) -> list[int]:
    """Every non-empty subset of full, sorted by (popcount, value)."""
    subs = [full]
    sub = (full - 1) & full
    while sub:
        subs.append(sub)
        sub = (sub - 1) & full
    subs.sort(key=lambda m: (m.bit_count(), m))
    return subs
