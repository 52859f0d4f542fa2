"""Reward-categorized replay: three FIFO sub-buffers with proportional sampling.

Transitions are routed by reward into positive / neutral / negative
sub-buffers. Batches draw from each category in proportion to its current
size, so rare terminal outcomes keep a guaranteed presence:

    n_pos = floor(len_pos / N * b)
    n_neu = floor(len_neu / N * b)
    n_neg = b - n_pos - n_neu

The remainder lands on the negative category by construction. If a quota
exceeds what a sub-buffer holds, the shortfall shifts to whichever other
sub-buffer has the most unsampled items left.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from enum import Enum

import numpy as np


class Category(Enum):
    POSITIVE = "positive"
    NEUTRAL = "neutral"
    NEGATIVE = "negative"


_ORDER = (Category.POSITIVE, Category.NEUTRAL, Category.NEGATIVE)


@dataclass(frozen=True, eq=False)
class Experience:
    """One transition. ``a`` is the raw policy output in [-1, 1]^2."""

    s: np.ndarray
    a: np.ndarray
    r: float
    s_next: np.ndarray
    done: bool


class InsufficientExperienceError(RuntimeError):
    """Requested batch exceeds the number of stored transitions."""


def classify(r: float, positive_min: float = 100.0, negative_max: float = -50.0) -> Category:
    """Route a reward to its category; thresholds isolate terminal outcomes."""
    if r >= positive_min:
        return Category.POSITIVE
    if r <= negative_max:
        return Category.NEGATIVE
    return Category.NEUTRAL


def proportional_quotas(sizes: tuple[int, int, int], batch: int) -> tuple[int, int, int]:
    """Raw per-category quotas before any shortfall redistribution."""
    n_pos, n_neu, n_neg = sizes
    total = n_pos + n_neu + n_neg
    if batch < 1:
        raise ValueError("batch size must be >= 1")
    if total < batch:
        raise InsufficientExperienceError(f"buffer holds {total} < batch {batch}")
    q_pos = n_pos * batch // total
    q_neu = n_neu * batch // total
    return q_pos, q_neu, batch - q_pos - q_neu


def redistribute(quotas: tuple[int, int, int], sizes: tuple[int, int, int]) -> tuple[int, int, int]:
    """Shift any over-quota onto the category with the most headroom."""
    q = list(quotas)
    for i in range(3):
        shortfall = q[i] - sizes[i]
        if shortfall <= 0:
            continue
        q[i] = sizes[i]
        while shortfall > 0:
            headrooms = [sizes[j] - q[j] for j in range(3)]
            j = int(np.argmax(headrooms))
            take = min(shortfall, headrooms[j])
            if take <= 0:
                raise InsufficientExperienceError("cannot satisfy batch quota")
            q[j] += take
            shortfall -= take
    return tuple(q)


class CategorizedBuffer:
    """Three reward-partitioned FIFO rings with balanced batch sampling."""

    def __init__(
        self,
        capacity_per_category: int = 100_000,
        positive_min: float = 100.0,
        negative_max: float = -50.0,
    ):
        if capacity_per_category < 1:
            raise ValueError("capacity must be >= 1")
        if positive_min <= negative_max:
            raise ValueError("positive_min must exceed negative_max")
        self.positive_min = positive_min
        self.negative_max = negative_max
        self._buffers: dict[Category, deque] = {
            c: deque(maxlen=capacity_per_category) for c in _ORDER
        }

    def __len__(self) -> int:
        return sum(len(b) for b in self._buffers.values())

    def sizes(self) -> tuple[int, int, int]:
        return tuple(len(self._buffers[c]) for c in _ORDER)

    def category_fractions(self) -> tuple[float, float, float]:
        total = len(self)
        if total == 0:
            return (0.0, 0.0, 0.0)
        return tuple(len(self._buffers[c]) / total for c in _ORDER)

    def push(self, e: Experience) -> None:
        cat = classify(e.r, self.positive_min, self.negative_max)
        self._buffers[cat].append(e)

    def sample(self, batch: int, rng: np.random.Generator) -> list[Experience]:
        """Draw a balanced batch without replacement inside each category."""
        sizes = self.sizes()
        quotas = redistribute(proportional_quotas(sizes, batch), sizes)
        out: list[Experience] = []
        for cat, n, size in zip(_ORDER, quotas, sizes):
            if n == 0:
                continue
            idx = rng.choice(size, size=n, replace=False)
            buf = self._buffers[cat]
            out.extend(buf[int(i)] for i in idx)
        return out
