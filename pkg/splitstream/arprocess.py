"""The auto-regressive process X_n = W_n X_{n-1} + 1 and its stationary limit."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .chunks import batch_means_error, chunk_rng, chunk_sizes, map_chunks
from .errors import NotApplicable
from .models import SeriesParams, SplittingMeasure, WPath, XInfSampler, truncation_depth
from .splitting import sample_atom_indices, sample_weights

logger = logging.getLogger(__name__)

XINF_BLOCK = 65_536


def ar_step(x: float, w: float) -> float:
    return w * x + 1.0


def sample_path(measure: SplittingMeasure, K: int, rng: np.random.Generator) -> WPath:
    """Weights w_1..w_K with products pi_k, values X_k and the dual X*_k."""

    if K < 0:
        raise ValueError("K must be nonnegative")
    weights = sample_weights(measure, K, rng)
    pi = np.concatenate(([1.0], np.cumprod(weights)))
    x = np.zeros(K + 1)
    for k in range(1, K + 1):
        x[k] = ar_step(x[k - 1], weights[k - 1])
    x_star = np.concatenate(([0.0], np.cumsum(pi[:-1])))
    return WPath(weights=weights, pi=pi, x=x, x_star=x_star)


def sample_x_inf(sampler: XInfSampler, rng: np.random.Generator) -> float:
    """X*_P for a fresh path of the sampler's depth P."""

    weights = sample_weights(sampler.measure, sampler.depth - 1, rng)
    return 1.0 + float(np.sum(np.cumprod(weights)))


def sample_x_inf_many(sampler: XInfSampler, size: int, rng: np.random.Generator) -> np.ndarray:
    out = np.empty(size)
    start = 0
    while start < size:
        block = min(XINF_BLOCK, size - start)
        weights = sample_weights(sampler.measure, (sampler.depth - 1, block), rng)
        out[start : start + block] = 1.0 + np.cumprod(weights, axis=0).sum(axis=0)
        start += block
    return out


def laplace_x_inf(
    measure: SplittingMeasure,
    s: float,
    n_samples: int,
    tol: float,
    rng: np.random.Generator,
) -> Tuple[float, float]:
    """Monte Carlo estimate of E exp(-s X_inf) with a batch-means standard error."""

    if s < 0:
        raise ValueError("s must be nonnegative")
    if s == 0:
        return 1.0, 0.0
    sampler = XInfSampler.from_measure(measure, tol)
    values = np.exp(-s * sample_x_inf_many(sampler, n_samples, rng))
    return float(np.mean(values)), batch_means_error(values)


def laplace_x_inf_binary_closed(p: float, lam: float) -> float:
    """Closed-form Laplace transform of X_inf for the binary measure p d_p + q d_q."""

    if not 0.0 < p < 1.0 or p == 0.5:
        raise NotApplicable(
            f"closed form needs p in (0, 1) other than 1/2, got {p}; "
            "use laplace_x_inf_symmetric for p = 1/2"
        )
    if lam <= 0:
        raise ValueError("lam must be positive")
    q = 1.0 - p
    scale = 1.0 / (1.0 / q - 1.0 / p)
    return scale * (math.expm1(-lam / p) - math.expm1(-lam / q)) / lam


def laplace_x_inf_symmetric(lam: float) -> float:
    """X_inf is 2 for the symmetric binary measure."""

    return math.exp(-2.0 * lam)


def x_inf_uniform_bounds(p: float) -> Tuple[float, float]:
    """Support of X_inf for a binary measure: X_inf is uniform on [1/max(p,q), 1/min(p,q)]."""

    if not 0.0 < p < 1.0 or p == 0.5:
        raise NotApplicable("the uniform law holds for binary measures with p != 1/2")
    q = 1.0 - p
    return 1.0 / max(p, q), 1.0 / min(p, q)


@dataclass(frozen=True)
class PathChunk:
    """Products pi_k and duals X*_k (rows are depths) for one batch of paths."""

    pi: np.ndarray
    x_star: np.ndarray
    x_inf: np.ndarray

    @property
    def size(self) -> int:
        return int(self.x_inf.size)


@dataclass(frozen=True)
class PathEnsemble:
    """A reproducible batch of weight paths, regenerated chunk by chunk.

    Chunk ``i`` draws its uniforms from ``(seed, i)`` depth-major, so a deeper
    request extends every path without changing its prefix. Deterministic
    measures collapse to a single exact path.
    """

    measure: SplittingMeasure
    n_paths: int
    seed: int = 0
    chunk_size: int = 10_000
    xinf_tol: float = 1e-10

    @classmethod
    def from_params(cls, measure: SplittingMeasure, params: SeriesParams) -> "PathEnsemble":
        return cls(
            measure=measure,
            n_paths=params.mc_paths,
            seed=params.seed,
            chunk_size=params.chunk_size,
            xinf_tol=params.xinf_tol,
        )

    @property
    def exact(self) -> bool:
        return self.measure.is_deterministic

    @property
    def inf_depth(self) -> int:
        return truncation_depth(self.measure.delta, self.xinf_tol)

    @property
    def sizes(self) -> list:
        return [1] if self.exact else chunk_sizes(self.n_paths, self.chunk_size)

    @property
    def chunk_count(self) -> int:
        return len(self.sizes)

    def chunk(self, index: int, depth: int) -> PathChunk:
        rows = max(depth, self.inf_depth)
        size = self.sizes[index]
        rng = chunk_rng(self.seed, index)
        atoms = sample_atom_indices(self.measure, (rows, size), rng)
        weights = self.measure.weights[atoms]
        pi = np.empty((rows, size))
        pi[0] = 1.0
        np.cumprod(weights[: rows - 1], axis=0, out=pi[1:])
        x_star = np.empty((rows, size))
        x_star[0] = 0.0
        np.cumsum(pi[: rows - 1], axis=0, out=x_star[1:])
        x_inf = pi[: self.inf_depth].sum(axis=0)
        return PathChunk(pi=pi[:depth], x_star=x_star[:depth], x_inf=x_inf)

    def map(self, fn, depth: int, workers: int = 1) -> list:
        """Apply *fn* to every chunk at *depth*, in chunk order."""

        return map_chunks(lambda index: fn(self.chunk(index, depth)), self.chunk_count, workers)

    def x_inf_samples(self, workers: int = 1) -> np.ndarray:
        """Every path's X_inf, in chunk order."""

        return np.concatenate(self.map(lambda chunk: chunk.x_inf, 1, workers))
