"""Executable semantics of the protocol: splitting trees and the stack chain."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
from scipy import stats

from .chunks import Moments, chunk_rng, chunk_sizes, map_chunks, merge_moments, resolve_seed
from .errors import UntrustedEstimate
from .models import (
    ArrivalLaw,
    BranchingLaw,
    Censored,
    ProbeReport,
    SimEstimate,
    StackState,
    TreeStats,
    Unstable,
)

logger = logging.getLogger(__name__)

DEFAULT_NODE_BUDGET = 10**7
CENSORED_LIMIT = 0.01


def _option_table(law: BranchingLaw) -> Tuple[np.ndarray, List[np.ndarray]]:
    options = law.options()
    cdf = np.cumsum([prob for prob, _ in options])
    cdf[-1] = 1.0
    return cdf, [vector for _, vector in options]


def split_group(n: int, law: BranchingLaw, rng: np.random.Generator) -> Tuple[Tuple[int, ...], int]:
    """Draw (G, weight vector) and split *n* items multinomially over the G subgroups."""

    cdf, vectors = _option_table(law)
    index = 0 if len(vectors) == 1 else int(np.searchsorted(cdf, rng.random(), side="right"))
    vector = vectors[index]
    if n == 0:
        return (0,) * len(vector), len(vector)
    counts = rng.multinomial(n, vector)
    return tuple(int(c) for c in counts), len(vector)


@dataclass(frozen=True)
class ForestResult:
    nodes: np.ndarray
    depth: np.ndarray
    leaves: np.ndarray
    items: np.ndarray
    censored: np.ndarray


def simulate_forest(
    roots: np.ndarray,
    d: int,
    arrivals: ArrivalLaw,
    law: BranchingLaw,
    node_budget: int,
    rng: np.random.Generator,
) -> ForestResult:
    """Grow many independent trees level by level with one shared frontier."""

    if node_budget < 1:
        raise ValueError("node_budget must be at least 1")
    roots = np.asarray(roots, dtype=np.int64)
    count = roots.size
    cdf, vectors = _option_table(law)
    nodes = np.zeros(count, dtype=np.int64)
    depth = np.zeros(count, dtype=np.int64)
    leaves = np.zeros(count, dtype=np.int64)
    items = np.zeros(count, dtype=np.int64)
    censored = np.zeros(count, dtype=bool)

    sizes = roots
    tree = np.arange(count)
    level = 0
    while sizes.size:
        per_tree = np.bincount(tree, minlength=count)
        nodes += per_tree
        depth[per_tree > 0] = level
        censored |= nodes > node_budget
        keep = ~censored[tree]
        sizes, tree = sizes[keep], tree[keep]

        leaf = sizes < d
        leaves += np.bincount(tree[leaf], minlength=count)
        items += np.bincount(tree[leaf], weights=sizes[leaf], minlength=count).astype(np.int64)
        sizes, tree = sizes[~leaf], tree[~leaf]
        if not sizes.size:
            break

        if len(vectors) == 1:
            choice = np.zeros(sizes.size, dtype=np.intp)
        else:
            choice = np.searchsorted(cdf, rng.random(sizes.size), side="right")
        child_sizes: List[np.ndarray] = []
        child_tree: List[np.ndarray] = []
        for index, vector in enumerate(vectors):
            mask = choice == index
            if not mask.any():
                continue
            split = rng.multinomial(sizes[mask], vector)
            child_sizes.append(split.ravel())
            child_tree.append(np.repeat(tree[mask], vector.size))
        sizes = np.concatenate(child_sizes)
        tree = np.concatenate(child_tree)
        sizes = sizes + arrivals.sample(rng, sizes.size)
        level += 1

    return ForestResult(nodes=nodes, depth=depth, leaves=leaves, items=items, censored=censored)


def simulate_tree(
    n: int,
    d: int,
    arrivals: ArrivalLaw,
    law: BranchingLaw,
    node_budget: int,
    rng: np.random.Generator,
) -> TreeStats | Unstable:
    result = simulate_forest(np.array([n]), d, arrivals, law, node_budget, rng)
    if result.censored[0]:
        return Unstable(node_budget=node_budget)
    return TreeStats(
        nodes=int(result.nodes[0]),
        depth=int(result.depth[0]),
        leaves=int(result.leaves[0]),
        items_processed=int(result.items[0]),
    )


def _variance_error(parts: List[Moments], merged: Moments) -> float:
    """Batch-means error of the variance over chunks; normal theory with one chunk."""

    variances = [float(part.variance) for part in parts if part.count > 1]
    if len(variances) > 1:
        return float(np.std(variances, ddof=1) / np.sqrt(len(variances)))
    if merged.count > 1:
        return float(merged.variance) * float(np.sqrt(2.0 / (merged.count - 1)))
    return 0.0


def _summarise(parts: List[Tuple[Moments, int]], trials: int, label: str) -> SimEstimate:
    moments = merge_moments(part for part, _ in parts)
    censored = sum(c for _, c in parts)
    trusted = censored <= CENSORED_LIMIT * trials
    if not trusted:
        warnings.warn(
            f"{label}: {censored} of {trials} runs censored; estimate is untrusted",
            UntrustedEstimate,
            stacklevel=3,
        )
    return SimEstimate(
        mean=float(moments.mean),
        std_error=float(moments.std_error),
        trials=trials,
        censored=censored,
        variance=float(moments.variance),
        trusted=trusted,
        variance_std_error=_variance_error([part for part, _ in parts], moments),
    )


def estimate_mean_size(
    n: int,
    d: int,
    arrivals: ArrivalLaw,
    law: BranchingLaw,
    trials: int,
    node_budget: int = DEFAULT_NODE_BUDGET,
    rng: int | np.random.Generator | None = 0,
    workers: int = 1,
    chunk_size: int = 1000,
) -> SimEstimate:
    """Mean tree size over *trials* trees; censored trees are counted, not averaged."""

    if trials < 1:
        raise ValueError("trials must be at least 1")
    seed = resolve_seed(rng)
    sizes = chunk_sizes(trials, chunk_size)
    logger.info("simulating %d trees (n=%d, d=%d, arrivals=%s)", trials, n, d, arrivals.describe())

    def run_chunk(index: int) -> Tuple[Moments, int]:
        result = simulate_forest(
            np.full(sizes[index], n), d, arrivals, law, node_budget, chunk_rng(seed, index)
        )
        logger.debug("tree chunk %d done", index)
        return Moments.of(result.nodes[~result.censored]), int(result.censored.sum())

    return _summarise(map_chunks(run_chunk, len(sizes), workers), trials, "estimate_mean_size")


def stack_step(
    s: StackState,
    d: int,
    law: BranchingLaw,
    arrivals: ArrivalLaw,
    rng: np.random.Generator,
) -> StackState:
    """One slot of the stack chain (SSHIFT when the head is below d, SPLIT otherwise)."""

    cells = s.cells
    if not cells:
        if arrivals.is_none:
            return StackState((), s.time + 1)
        return StackState((arrivals.draw(rng),), s.time + 1)
    head, rest = cells[0], cells[1:]
    if head < d:
        if rest:
            rest = (rest[0] + arrivals.draw(rng),) + rest[1:]
        return StackState(rest, s.time + 1)
    counts, _ = split_group(head, law, rng)
    first = counts[0] + arrivals.draw(rng)
    return StackState((first,) + counts[1:] + rest, s.time + 1)


def hitting_time(
    n: int,
    d: int,
    law: BranchingLaw,
    arrivals: ArrivalLaw,
    horizon: int,
    rng: np.random.Generator,
) -> int | Censored:
    """Slots until the stack started from (n) empties."""

    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    stack = [n]  # head last
    steps = 0
    while stack:
        if steps >= horizon:
            return Censored(horizon=horizon)
        steps += 1
        head = stack.pop()
        if head < d:
            if stack:
                stack[-1] += arrivals.draw(rng)
            continue
        counts, _ = split_group(head, law, rng)
        stack.extend(reversed(counts[1:]))
        stack.append(counts[0] + arrivals.draw(rng))
    return steps


def estimate_hitting_time(
    n: int,
    d: int,
    law: BranchingLaw,
    arrivals: ArrivalLaw,
    trials: int,
    horizon: int = DEFAULT_NODE_BUDGET,
    rng: int | np.random.Generator | None = 0,
    workers: int = 1,
    chunk_size: int = 1000,
) -> SimEstimate:
    if trials < 1:
        raise ValueError("trials must be at least 1")
    seed = resolve_seed(rng)
    sizes = chunk_sizes(trials, chunk_size)

    def run_chunk(index: int) -> Tuple[Moments, int]:
        chunk_gen = chunk_rng(seed, index)
        times = []
        censored = 0
        for _ in range(sizes[index]):
            outcome = hitting_time(n, d, law, arrivals, horizon, chunk_gen)
            if isinstance(outcome, Censored):
                censored += 1
            else:
                times.append(outcome)
        return Moments.of(np.array(times, dtype=float)), censored

    return _summarise(map_chunks(run_chunk, len(sizes), workers), trials, "estimate_hitting_time")


def _backlog_trajectory(
    d: int,
    law: BranchingLaw,
    arrivals: ArrivalLaw,
    horizon: int,
    checkpoints: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    stack = [d]  # head last
    backlog = d
    marks = np.empty(checkpoints.size)
    mark = 0
    for t in range(1, horizon + 1):
        if not stack:
            if not arrivals.is_none:
                a = arrivals.draw(rng)
                stack.append(a)
                backlog += a
        else:
            head = stack.pop()
            if head < d:
                backlog -= head
                if stack:
                    a = arrivals.draw(rng)
                    stack[-1] += a
                    backlog += a
            else:
                counts, _ = split_group(head, law, rng)
                a = arrivals.draw(rng)
                stack.extend(reversed(counts[1:]))
                stack.append(counts[0] + a)
                backlog += a
        while mark < checkpoints.size and checkpoints[mark] == t:
            marks[mark] = backlog
            mark += 1
    return marks


def stability_probe(
    d: int,
    law: BranchingLaw,
    arrivals: ArrivalLaw,
    horizon: int,
    reps: int,
    rng: int | np.random.Generator | None = 0,
    checkpoints: int = 200,
    min_drift: float = 2e-3,
    workers: int = 1,
) -> ProbeReport:
    """Classify stability from the linear drift of the mean backlog.

    The chain starts from (d) with continuous arrivals; a line is fitted to the
    mean backlog over the second half of the horizon. The slope band of
    +-2 standard errors wholly below *min_drift* is stable, wholly above is
    unstable, anything else is inconclusive.
    """

    if horizon < 1000:
        raise ValueError("horizon must be at least 1000 slots")
    if reps < 1:
        raise ValueError("reps must be at least 1")
    seed = resolve_seed(rng)
    marks = np.unique(np.linspace(horizon / checkpoints, horizon, checkpoints).astype(np.int64))
    logger.info("probing stability: d=%d arrivals=%s horizon=%d reps=%d", d, arrivals.describe(), horizon, reps)
    runs = map_chunks(
        lambda index: _backlog_trajectory(d, law, arrivals, horizon, marks, chunk_rng(seed, index)),
        reps,
        workers,
    )
    mean_backlog = np.mean(np.vstack(runs), axis=0)

    half = marks.size // 2
    fit = stats.linregress(marks[half:].astype(float), mean_backlog[half:])
    slope, slope_se = float(fit.slope), float(fit.stderr)
    if slope + 2 * slope_se < min_drift:
        classification = "stable"
    elif slope - 2 * slope_se > min_drift:
        classification = "unstable"
    else:
        classification = "inconclusive"
    logger.info("drift %.3g +- %.2g -> %s", slope, slope_se, classification)
    return ProbeReport(
        arrivals=arrivals.describe(),
        checkpoints=tuple(int(m) for m in marks),
        mean_backlog=tuple(float(b) for b in mean_backlog),
        slope=slope,
        slope_std_error=slope_se,
        classification=classification,
        min_drift=min_drift,
    )


def static_mean_sizes(law: BranchingLaw, d: int, n_max: int) -> np.ndarray:
    """Exact E(R_n) without arrivals for n = 0..n_max.

    Each child of a node with n items holds Binom(n, v_i) items, so
    ``a_n = 1 + sum_options P(option) sum_i E a_{Binom(n, v_i)}``; the j = n
    terms are moved to the left-hand side.
    """

    if d < 2:
        raise ValueError("trees without arrivals only terminate for d >= 2")
    alpha = np.ones(n_max + 1)
    options = law.options()
    for n in range(d, n_max + 1):
        support = np.arange(n + 1)
        rhs = 1.0
        self_weight = 0.0
        for prob, vector in options:
            for value in vector:
                pmf = stats.binom.pmf(support, n, value)
                self_weight += prob * pmf[n]
                rhs += prob * float(np.dot(pmf[:n], alpha[:n]))
        alpha[n] = rhs / (1.0 - self_weight)
    return alpha
