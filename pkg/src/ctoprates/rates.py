"""Planned acceptance rates per FCA and 15-minute period."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class RatePlan:
    resources: tuple[str, ...]
    rates: np.ndarray  # (resource, period), non-negative integers

    def __post_init__(self):
        object.__setattr__(self, "resources", tuple(self.resources))
        arr = np.array(self.rates, dtype=np.int64).reshape(len(self.resources), -1)
        if np.any(arr < 0):
            raise ValueError("rates must be non-negative")
        arr.setflags(write=False)
        object.__setattr__(self, "rates", arr)

    @property
    def T(self) -> int:
        return self.rates.shape[1]

    def row(self, resource: str) -> np.ndarray:
        return self.rates[self.resources.index(resource)]

    def get(self, resource: str, period: int) -> int:
        return int(self.row(resource)[period - 1])

    def replace(self, resource: str, values: Sequence[int]) -> "RatePlan":
        arr = self.rates.copy()
        arr[self.resources.index(resource)] = values
        return RatePlan(self.resources, arr)

    def vector(self, cells: Iterable[tuple[str, int]]) -> np.ndarray:
        return np.array([self.get(r, t) for r, t in cells], dtype=np.int64)

    def with_vector(self, cells: Sequence[tuple[str, int]], values: Sequence[int]) -> "RatePlan":
        arr = self.rates.copy()
        for (r, t), v in zip(cells, values):
            arr[self.resources.index(r), t - 1] = int(v)
        return RatePlan(self.resources, arr)

    def __eq__(self, other):
        return (isinstance(other, RatePlan) and self.resources == other.resources
                and np.array_equal(self.rates, other.rates))

    def __hash__(self):
        return hash((self.resources, self.rates.tobytes()))

    @classmethod
    def constant(cls, resources: Sequence[str], T: int, value: int = 0) -> "RatePlan":
        return cls(tuple(resources), np.full((len(resources), T), value, dtype=np.int64))


def round_half_up(x) -> np.ndarray:
    """Round to the nearest integer, halves away from zero for non-negatives."""
    return np.floor(np.asarray(x, dtype=float) + 0.5 + 1e-9).astype(np.int64)
