"""Small argument- and data-validation helpers shared across the package."""

from __future__ import annotations

from typing import Iterable


class DataInvariantError(ValueError):
    """A data structure violates one of its documented invariants."""


class ShapeError(ValueError):
    """Operands have incompatible shapes for the requested operation."""


def check_count(name: str, value: int, minimum: int = 1) -> int:
    if not isinstance(value, int) or isinstance(value, bool) or value < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return value


def check_positive(name: str, value: float) -> float:
    if not value > 0:
        raise ValueError(f"{name} must be > 0, got {value!r}")
    return value


def check_nonnegative(name: str, value: float) -> float:
    if not value >= 0:
        raise ValueError(f"{name} must be >= 0, got {value!r}")
    return value


def check_probability(name: str, value: float, *, allow_one: bool = False) -> float:
    top_ok = value <= 1 if allow_one else value < 1
    if not (0 <= value and top_ok):
        bound = "[0, 1]" if allow_one else "[0, 1)"
        raise ValueError(f"{name} must lie in {bound}, got {value!r}")
    return value


def check_choice(name: str, value: str, choices: Iterable[str]) -> str:
    options = tuple(choices)
    if value not in options:
        raise ValueError(f"{name} must be one of {options}, got {value!r}")
    return value


def check_token_ids(ids: Iterable[int], vocab_size: int) -> list[int]:
    ids = list(ids)
    for pos, tid in enumerate(ids):
        if not 0 <= tid < vocab_size:
            raise ValueError(
                f"token id {tid} at position {pos} is out of range for vocabulary of size {vocab_size}"
            )
    return ids
