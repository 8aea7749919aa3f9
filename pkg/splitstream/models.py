"""Domain models shared by the simulation and analytic modules."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DegenerateSplit, InvalidLaw

SUM_TOLERANCE = 1e-12


def truncation_depth(delta: float, tol: float) -> int:
    """Smallest depth P with ``delta**P / (1 - delta) <= tol``."""

    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    depth = math.ceil(math.log(tol * (1.0 - delta)) / math.log(delta))
    return max(depth, 1)


def _check_weight_vector(vector: Sequence[float], g: int) -> Tuple[float, ...]:
    values = tuple(float(v) for v in vector)
    if len(values) != g:
        raise InvalidLaw(f"weight vector {values} does not have g={g} entries")
    for value in values:
        if value <= 0.0 or value >= 1.0:
            raise DegenerateSplit(f"weight {value} is not in (0, 1); the split is degenerate")
    if abs(math.fsum(values) - 1.0) > SUM_TOLERANCE:
        raise InvalidLaw(f"weight vector {values} does not sum to 1")
    return values


@dataclass(frozen=True)
class Branch:
    """One possible branch count together with the law of its weight vector."""

    g: int
    prob: float
    vectors: Tuple[Tuple[float, ...], ...]
    vector_probs: Tuple[float, ...] = (1.0,)

    def __post_init__(self) -> None:
        if self.g < 2:
            raise InvalidLaw(f"branch count must be at least 2, got {self.g}")
        if not 0.0 < self.prob <= 1.0:
            raise InvalidLaw(f"branch probability {self.prob} is not in (0, 1]")
        if len(self.vectors) != len(self.vector_probs) or not self.vectors:
            raise InvalidLaw("every weight vector needs exactly one probability")
        object.__setattr__(
            self, "vectors", tuple(_check_weight_vector(v, self.g) for v in self.vectors)
        )
        if any(p <= 0.0 or p > 1.0 for p in self.vector_probs):
            raise InvalidLaw("mixture probabilities must lie in (0, 1]")
        if abs(math.fsum(self.vector_probs) - 1.0) > SUM_TOLERANCE:
            raise InvalidLaw("mixture probabilities do not sum to 1")

    @classmethod
    def fixed(cls, g: int, prob: float, weights: Sequence[float]) -> "Branch":
        return cls(g=g, prob=prob, vectors=(tuple(weights),), vector_probs=(1.0,))

    @classmethod
    def mixture(
        cls, g: int, prob: float, components: Sequence[Tuple[float, Sequence[float]]]
    ) -> "Branch":
        return cls(
            g=g,
            prob=prob,
            vectors=tuple(tuple(v) for _, v in components),
            vector_probs=tuple(float(p) for p, _ in components),
        )


@dataclass(frozen=True)
class BranchingLaw:
    """Joint law of the branch count G and the weight vector (V_1, ..., V_G)."""

    branches: Tuple[Branch, ...]

    def __post_init__(self) -> None:
        if not self.branches:
            raise InvalidLaw("a branching law needs at least one branch")
        total = math.fsum(b.prob for b in self.branches)
        if abs(total - 1.0) > SUM_TOLERANCE:
            raise InvalidLaw(f"branch probabilities sum to {total}, not 1")

    @classmethod
    def symmetric(cls, g: int) -> "BranchingLaw":
        return cls(branches=(Branch.fixed(g, 1.0, [1.0 / g] * g),))

    @classmethod
    def binary(cls, p: float) -> "BranchingLaw":
        return cls(branches=(Branch.fixed(2, 1.0, [p, 1.0 - p]),))

    def options(self) -> List[Tuple[float, np.ndarray]]:
        """Flatten the law into (probability, weight vector) pairs."""

        flat: List[Tuple[float, np.ndarray]] = []
        for branch in self.branches:
            for prob, vector in zip(branch.vector_probs, branch.vectors):
                flat.append((branch.prob * prob, np.asarray(vector, dtype=float)))
        return flat

    def to_dict(self) -> Dict[str, object]:
        payload: List[Dict[str, object]] = []
        for branch in self.branches:
            if len(branch.vectors) == 1:
                payload.append({"g": branch.g, "prob": branch.prob, "weights": list(branch.vectors[0])})
            else:
                payload.append(
                    {
                        "g": branch.g,
                        "prob": branch.prob,
                        "mixture": [
                            {"prob": p, "weights": list(v)}
                            for p, v in zip(branch.vector_probs, branch.vectors)
                        ],
                    }
                )
        return {"branches": payload}


@dataclass(frozen=True)
class SplittingMeasure:
    """Size-biased law of the weight of the subgroup holding a tagged item."""

    atoms: Tuple[Tuple[float, float], ...]
    delta: float
    mean_G: float

    def __post_init__(self) -> None:
        if not self.atoms:
            raise InvalidLaw("a splitting measure needs at least one atom")
        for w, q in self.atoms:
            if not 0.0 < w < 1.0:
                raise DegenerateSplit(f"atom {w} is not in (0, 1)")
            if not 0.0 < q <= 1.0:
                raise InvalidLaw(f"atom mass {q} is not in (0, 1]")
        if abs(math.fsum(q for _, q in self.atoms) - 1.0) > SUM_TOLERANCE:
            raise InvalidLaw("atom masses do not sum to 1")
        largest = max(w for w, _ in self.atoms)
        if largest > self.delta or self.delta >= 1.0:
            raise InvalidLaw(f"delta={self.delta} must satisfy max atom {largest} <= delta < 1")
        expected_g = math.fsum(q / w for w, q in self.atoms)
        if abs(expected_g - self.mean_G) > 1e-9 or self.mean_G <= 1.0:
            raise InvalidLaw(f"mean_G={self.mean_G} does not match sum q/w = {expected_g}")

    @classmethod
    def from_atoms(cls, atoms: Sequence[Tuple[float, float]]) -> "SplittingMeasure":
        pairs = tuple((float(w), float(q)) for w, q in atoms)
        return cls(
            atoms=pairs,
            delta=max(w for w, _ in pairs),
            mean_G=math.fsum(q / w for w, q in pairs),
        )

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for w, _ in self.atoms])

    @property
    def masses(self) -> np.ndarray:
        return np.array([q for _, q in self.atoms])

    @property
    def is_deterministic(self) -> bool:
        return len(self.atoms) == 1

    def to_dict(self) -> Dict[str, object]:
        return {
            "atoms": [{"w": w, "q": q} for w, q in self.atoms],
            "delta": self.delta,
            "mean_G": self.mean_G,
        }


@dataclass(frozen=True)
class AssumptionReport:
    delta: float
    h2_value: float
    span: Optional[float]
    mean_abs_log_w: float

    @property
    def arithmetic(self) -> bool:
        return self.span is not None


@dataclass(frozen=True)
class WPath:
    """A sampled weight path with its products and auto-regressive values."""

    weights: np.ndarray
    pi: np.ndarray
    x: np.ndarray
    x_star: np.ndarray


@dataclass(frozen=True)
class XInfSampler:
    measure: SplittingMeasure
    tol: float
    depth: int

    @classmethod
    def from_measure(cls, measure: SplittingMeasure, tol: float = 1e-10) -> "XInfSampler":
        return cls(measure=measure, tol=tol, depth=truncation_depth(measure.delta, tol))

    @property
    def upper_bound(self) -> float:
        return 1.0 / (1.0 - self.measure.delta)


ARRIVAL_KINDS = ("none", "poisson", "deterministic", "pmf")


@dataclass(frozen=True)
class ArrivalLaw:
    """Law of the number of new items joining a group at each step."""

    kind: str = "none"
    lam: float = 0.0
    a: int = 0
    values: Tuple[int, ...] = ()
    probs: Tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in ARRIVAL_KINDS:
            raise ValueError(f"unknown arrival kind {self.kind!r}")
        if self.kind == "poisson" and self.lam < 0:
            raise ValueError("Poisson rate must be nonnegative")
        if self.kind == "deterministic" and self.a < 0:
            raise ValueError("deterministic arrivals must be nonnegative")
        if self.kind == "pmf":
            if not self.values or len(self.values) != len(self.probs):
                raise ValueError("pmf arrivals need matching values and probabilities")
            if any(v < 0 for v in self.values) or any(p < 0 for p in self.probs):
                raise ValueError("pmf values and probabilities must be nonnegative")
            if abs(math.fsum(self.probs) - 1.0) > SUM_TOLERANCE:
                raise ValueError("pmf probabilities do not sum to 1")

    @classmethod
    def none(cls) -> "ArrivalLaw":
        return cls()

    @classmethod
    def poisson(cls, lam: float) -> "ArrivalLaw":
        return cls(kind="poisson", lam=float(lam))

    @classmethod
    def deterministic(cls, a: int) -> "ArrivalLaw":
        return cls(kind="deterministic", a=int(a))

    @classmethod
    def pmf(cls, pairs: Sequence[Tuple[int, float]]) -> "ArrivalLaw":
        return cls(
            kind="pmf",
            values=tuple(int(v) for v, _ in pairs),
            probs=tuple(float(p) for _, p in pairs),
        )

    @classmethod
    def parse(cls, descriptor: str) -> "ArrivalLaw":
        """Parse ``none``, ``poisson:<lam>``, ``deterministic:<a>`` or ``pmf:<v>=<p>,...``."""

        text = descriptor.strip()
        kind, _, rest = text.partition(":")
        kind = kind.strip().lower()
        try:
            if kind == "none" and not rest:
                return cls.none()
            if kind == "poisson":
                return cls.poisson(float(rest))
            if kind == "deterministic":
                return cls.deterministic(int(rest))
            if kind == "pmf":
                pairs = []
                for item in rest.split(","):
                    value, _, prob = item.partition("=")
                    pairs.append((int(value), float(prob)))
                return cls.pmf(pairs)
        except ValueError as exc:
            raise ValueError(f"invalid arrival descriptor {descriptor!r}: {exc}") from exc
        raise ValueError(f"invalid arrival descriptor {descriptor!r}")

    @property
    def is_none(self) -> bool:
        if self.kind == "none":
            return True
        if self.kind == "poisson":
            return self.lam == 0.0
        if self.kind == "deterministic":
            return self.a == 0
        return all(v == 0 for v, p in zip(self.values, self.probs) if p > 0)

    @property
    def mean(self) -> float:
        if self.kind == "poisson":
            return self.lam
        if self.kind == "deterministic":
            return float(self.a)
        if self.kind == "pmf":
            return math.fsum(v * p for v, p in zip(self.values, self.probs))
        return 0.0

    def describe(self) -> str:
        if self.kind == "poisson":
            return f"poisson:{self.lam!r}"
        if self.kind == "deterministic":
            return f"deterministic:{self.a}"
        if self.kind == "pmf":
            return "pmf:" + ",".join(f"{v}={p!r}" for v, p in zip(self.values, self.probs))
        return "none"

    def draw(self, rng: np.random.Generator) -> int:
        if self.kind == "none":
            return 0
        if self.kind == "poisson":
            return int(rng.poisson(self.lam)) if self.lam > 0 else 0
        if self.kind == "deterministic":
            return self.a
        index = int(np.searchsorted(np.cumsum(self.probs), rng.random(), side="right"))
        return self.values[min(index, len(self.values) - 1)]

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "none" or size == 0:
            return np.zeros(size, dtype=np.int64)
        if self.kind == "poisson":
            if self.lam == 0:
                return np.zeros(size, dtype=np.int64)
            return rng.poisson(self.lam, size=size).astype(np.int64)
        if self.kind == "deterministic":
            return np.full(size, self.a, dtype=np.int64)
        cdf = np.cumsum(self.probs)
        index = np.minimum(np.searchsorted(cdf, rng.random(size), side="right"), len(self.values) - 1)
        return np.asarray(self.values, dtype=np.int64)[index]


@dataclass(frozen=True)
class StackState:
    """Stack of group sizes, head first; the empty tuple is the idle state."""

    cells: Tuple[int, ...] = ()
    time: int = 0

    @property
    def empty(self) -> bool:
        return not self.cells

    @property
    def backlog(self) -> int:
        return sum(self.cells)


@dataclass(frozen=True)
class TreeStats:
    nodes: int
    depth: int
    leaves: int
    items_processed: int


@dataclass(frozen=True)
class Unstable:
    """A tree abandoned because it outgrew the node budget."""

    node_budget: int


@dataclass(frozen=True)
class Censored:
    """A stack run that had not emptied when the horizon was reached."""

    horizon: int


@dataclass(frozen=True)
class SimEstimate:
    mean: float
    std_error: float
    trials: int
    censored: int
    variance: float = 0.0
    trusted: bool = True
    variance_std_error: float = 0.0

    def __post_init__(self) -> None:
        if self.censored > self.trials:
            raise ValueError("censored runs cannot exceed trials")
        if self.std_error < 0:
            raise ValueError("std_error must be nonnegative")

    def to_dict(self) -> Dict[str, object]:
        return {
            "mean": self.mean,
            "std_error": self.std_error,
            "trials": self.trials,
            "censored": self.censored,
            "variance": self.variance,
            "variance_std_error": self.variance_std_error,
            "trusted": self.trusted,
        }


@dataclass(frozen=True)
class ProbeReport:
    arrivals: str
    checkpoints: Tuple[int, ...]
    mean_backlog: Tuple[float, ...]
    slope: float
    slope_std_error: float
    classification: str
    min_drift: float


@dataclass(frozen=True)
class SeriesParams:
    """Truncation and sampling settings for the analytic series."""

    k_max: int
    mc_paths: int = 100_000
    xinf_tol: float = 1e-10
    seed: int = 0
    regularize: bool = True
    chunk_size: int = 10_000
    workers: int = 1

    def __post_init__(self) -> None:
        if self.k_max < 1:
            raise ValueError("k_max must be at least 1")
        if self.mc_paths < 1:
            raise ValueError("mc_paths must be at least 1")
        if self.chunk_size < 1 or self.workers < 1:
            raise ValueError("chunk_size and workers must be positive")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")

    @classmethod
    def for_measure(cls, measure: SplittingMeasure, **overrides: object) -> "SeriesParams":
        """Defaults for *measure*: ``k_max`` makes ``delta**k_max / (1 - delta)`` fall below 1e-10."""

        if overrides.get("k_max") is None:
            overrides["k_max"] = truncation_depth(measure.delta, 1e-10) + 1
        return cls(**overrides)  # type: ignore[arg-type]

    def with_seed(self, seed: int) -> "SeriesParams":
        return replace(self, seed=seed)

    def with_regularize(self, regularize: bool) -> "SeriesParams":
        return replace(self, regularize=regularize)


@dataclass(frozen=True)
class ConstantsC:
    """Solution (C_0, ..., C_{D-1}, C_inf) of the boundary system."""

    c: Tuple[float, ...]
    c_inf: float
    lam: float
    d: int
    residuals: Dict[str, float] = field(default_factory=dict)
    std_errors: Tuple[float, ...] = ()

    def delta_vector(self) -> np.ndarray:
        """Differences C_{j+1} - C_j for j < D, with C_D = 0."""

        padded = np.append(np.asarray(self.c, dtype=float), 0.0)
        return np.diff(padded)

    def as_vector(self) -> np.ndarray:
        return np.append(np.asarray(self.c, dtype=float), self.c_inf)

    def to_dict(self) -> Dict[str, object]:
        return {
            "lam": self.lam,
            "d": self.d,
            "C": list(self.c),
            "C_inf": self.c_inf,
            "std_errors": list(self.std_errors),
            "residuals": dict(self.residuals),
        }


@dataclass(frozen=True)
class MatrixM:
    """The (D+1) x (D+1) boundary matrix; rows 1..D+1, columns 0..D."""

    entries: np.ndarray
    std_errors: np.ndarray
    lam: float
    d: int
    regularized: bool
    measure: SplittingMeasure
    params: SeriesParams
    det_std_error: float = 0.0
    chunk_entries: Tuple[np.ndarray, ...] = field(default=(), repr=False)

    def entry(self, row: int, column: int) -> float:
        """Entry at 1-based *row* and 0-based *column*."""

        return float(self.entries[row - 1, column])


@dataclass(frozen=True)
class SeriesEstimate:
    value: float
    std_error: float
    tail_bound: float
    trusted: bool
    leading_term: float = 0.0

    def __float__(self) -> float:
        return self.value


@dataclass(frozen=True)
class LambdaC:
    value: float
    uncertainty: float
    jitter: float
    roots: Tuple[float, ...]
    bracket: Tuple[float, float]
