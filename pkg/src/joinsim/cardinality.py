"""Saturating 128-bit counters for intermediate-result sizes."""

from __future__ import annotations

from collections.abc import Iterable
from dataclasses import dataclass

U128_MAX = (1 << 128) - 1


@dataclass(frozen=True, order=True, slots=True)
class Cardinality:
    """An exact row count clamped at the unsigned 128-bit maximum.

    value is exact whenever saturated is False; a saturated count always
    carries value == U128_MAX, so ordering by value alone stays consistent.
    """

    value: int
    saturated: bool = False

    def __post_init__(self) -> None:
        if not 0 <= self.value <= U128_MAX:
            raise ValueError(f"cardinality out of range: {self.value}")
        if self.saturated and self.value != U128_MAX:
            raise ValueError("a saturated cardinality must sit at U128_MAX")

    @classmethod
    def exact(cls, n: int) -> Cardinality:
        if n > U128_MAX:
            return SATURATED
        return cls(n)

    def __add__(self, other: Cardinality) -> Cardinality:
        if self.saturated or other.saturated:
            return SATURATED
        raw = self.value + other.value
        return SATURATED if raw > U128_MAX else Cardinality(raw)

    def __mul__(self, other: Cardinality) -> Cardinality:
        # A true zero annihilates even an overflowed factor.
        if (self.value == 0 and not self.saturated) or (
            other.value == 0 and not other.saturated
        ):
            return ZERO
        if self.saturated or other.saturated:
            return SATURATED
        raw = self.value * other.value
        return SATURATED if raw > U128_MAX else Cardinality(raw)

    def __int__(self) -> int:
        return self.value

    def __bool__(self) -> bool:
        return self.value != 0


ZERO = Cardinality(0)
ONE = Cardinality(1)
SATURATED = Cardinality(U128_MAX, True)


def sat_sum(items: Iterable[Cardinality]) -> Cardinality:
    total = ZERO
    for item in items:
        total = total + item
    return total


def sat_product(items: Iterable[Cardinality]) -> Cardinality:
    total = ONE
    for item in items:
        total = total * item
    return total
