"""Fixed-size seeded chunks so results do not depend on the worker count."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, List, Sequence, Tuple, TypeVar

import numpy as np

logger = logging.getLogger(__name__)

T = TypeVar("T")


def resolve_seed(seed_or_rng: int | np.random.Generator | None) -> int:
    """Turn a seed or a generator into a nonnegative integer seed."""

    if seed_or_rng is None:
        return 0
    if isinstance(seed_or_rng, np.random.Generator):
        return int(seed_or_rng.integers(0, 2**63 - 1))
    seed = int(seed_or_rng)
    if seed < 0:
        raise ValueError("seeds must be nonnegative")
    return seed


def chunk_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


def side_rng(seed: int, stream: int) -> np.random.Generator:
    """Generator independent of every chunk stream of *seed*."""

    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream,)))


def chunk_sizes(total: int, chunk_size: int) -> List[int]:
    if total < 0 or chunk_size < 1:
        raise ValueError("total must be nonnegative and chunk_size positive")
    full, rest = divmod(total, chunk_size)
    return [chunk_size] * full + ([rest] if rest else [])


def map_chunks(fn: Callable[[int], T], count: int, workers: int = 1) -> List[T]:
    """Apply *fn* to chunk indices ``0..count-1``; results keep chunk order."""

    if workers <= 1 or count <= 1:
        return [fn(index) for index in range(count)]
    logger.debug("mapping %d chunks over %d threads", count, workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(count)))


@dataclass(frozen=True)
class Moments:
    """Count, mean and centred sum of squares of a batch of samples.

    Samples run along the last axis, so ``mean`` and ``m2`` are arrays when the
    batch holds several estimators at once.
    """

    count: int
    mean: float | np.ndarray
    m2: float | np.ndarray

    @classmethod
    def of(cls, values: np.ndarray) -> "Moments":
        values = np.asarray(values, dtype=float)
        if values.shape[-1] == 0:
            zeros = np.zeros(values.shape[:-1])
            return cls(0, zeros, zeros)
        mean = np.mean(values, axis=-1)
        m2 = np.sum((values - np.expand_dims(mean, -1)) ** 2, axis=-1)
        return cls(int(values.shape[-1]), mean, m2)

    def merge(self, other: "Moments") -> "Moments":
        if other.count == 0:
            return self
        if self.count == 0:
            return other
        count = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * other.count / count
        m2 = self.m2 + other.m2 + delta * delta * self.count * other.count / count
        return Moments(count, mean, m2)

    @property
    def variance(self) -> float | np.ndarray:
        return self.m2 / (self.count - 1) if self.count > 1 else self.m2 * 0.0

    @property
    def std_error(self) -> float | np.ndarray:
        if self.count < 2:
            return self.m2 * 0.0
        return np.sqrt(self.variance / self.count)


def merge_moments(parts: Iterable[Moments]) -> Moments:
    total = Moments(0, 0.0, 0.0)
    for part in parts:
        total = total.merge(part)
    return total


def compensated_mean(sums: Sequence[np.ndarray], counts: Sequence[int]) -> Tuple[np.ndarray, int]:
    """Elementwise ``math.fsum`` of chunk sums divided by the total count."""

    total = int(sum(counts))
    stacked = np.stack([np.asarray(s, dtype=float) for s in sums])
    flat = stacked.reshape(len(sums), -1)
    merged = np.array([math.fsum(flat[:, j]) for j in range(flat.shape[1])])
    return merged.reshape(stacked.shape[1:]) / total, total


def batch_means_error(values: np.ndarray, batches: int = 20) -> float:
    """Standard error of the mean of *values* from non-overlapping batch means."""

    values = np.asarray(values, dtype=float)
    batches = min(batches, values.size)
    if batches < 2:
        return 0.0
    means = np.array([chunk.mean() for chunk in np.array_split(values, batches)])
    return float(np.std(means, ddof=1) / math.sqrt(batches))
