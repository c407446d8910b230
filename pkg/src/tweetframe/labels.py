"""Framing categories shared by every stage of the pipeline."""

from __future__ import annotations

from enum import IntEnum


class Category(IntEnum):
    PROBLEM = 1
    SOLUTION = 2
    OTHER = 3

    @classmethod
    def parse(cls, value) -> "Category":
        """Coerce an integer code or a name ("problem", "Solution") into a Category."""
        if isinstance(value, Category):
            return value
        if isinstance(value, str) and not value.strip().lstrip("-").isdigit():
            try:
                return cls[value.strip().upper()]
            except KeyError:
                raise ValueError(f"unknown category {value!r}") from None
        return cls(int(value))


LABELS: tuple[int, ...] = tuple(int(c) for c in Category)
NUM_LABELS = len(LABELS)


def to_index(label: int) -> int:
    """Category code (1..3) -> zero-based class index."""
    return int(label) - 1


def from_index(index: int) -> int:
    return int(index) + 1
