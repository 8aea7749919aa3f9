"""Splitting measures derived from branching laws, and their checks."""

from __future__ import annotations

import logging
import math
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DegenerateSplit
from .models import AssumptionReport, BranchingLaw, SplittingMeasure

logger = logging.getLogger(__name__)

MERGE_TOLERANCE = 1e-12
SPAN_TOLERANCE = 1e-9
SPAN_MAX_DENOMINATOR = 64


def derive_splitting_measure(law: BranchingLaw) -> SplittingMeasure:
    """Size-biased weight law: each weight value is charged ``P(G) * P(vector) * v_i``."""

    contributions: List[Tuple[float, float]] = []
    for prob, vector in law.options():
        for value in vector:
            if value <= 0.0 or value >= 1.0:
                raise DegenerateSplit(f"weight {value} makes the split degenerate")
            contributions.append((float(value), prob * float(value)))
    contributions.sort()

    atoms: List[Tuple[float, List[float]]] = []
    for value, mass in contributions:
        if atoms and abs(value - atoms[-1][0]) <= MERGE_TOLERANCE:
            atoms[-1][1].append(mass)
        else:
            atoms.append((value, [mass]))
    merged = [(w, math.fsum(masses)) for w, masses in atoms]
    measure = SplittingMeasure(
        atoms=tuple(merged),
        delta=max(w for w, _ in merged),
        mean_G=math.fsum(q / w for w, q in merged),
    )
    logger.debug("derived %d atoms, mean_G=%r", len(merged), measure.mean_G)
    return measure


def branching_mean(law: BranchingLaw) -> float:
    """E(G) read directly off the branching law."""

    return math.fsum(branch.prob * branch.g for branch in law.branches)


def detect_span(
    values: Sequence[float],
    tol: float = SPAN_TOLERANCE,
    max_denominator: int = SPAN_MAX_DENOMINATOR,
) -> Optional[float]:
    """Largest xi with every value an integer multiple of xi, or None.

    Ratios to the smallest value are matched against fractions with denominator
    at most *max_denominator*; the candidate is the gcd of those fractions.
    """

    positive = sorted(float(v) for v in values)
    if not positive or positive[0] <= 0.0:
        raise ValueError("span detection needs positive values")
    base = positive[0]
    fractions = [Fraction(v / base).limit_denominator(max_denominator) for v in positive]
    denominator = 1
    for frac in fractions:
        denominator = math.lcm(denominator, frac.denominator)
    numerator = 0
    for frac in fractions:
        numerator = math.gcd(numerator, frac.numerator * (denominator // frac.denominator))
    span = base * numerator / denominator
    for value in positive:
        if abs(value - span * round(value / span)) > tol:
            return None
    return span


def validate_assumptions(measure: SplittingMeasure) -> AssumptionReport:
    weights = measure.weights
    masses = measure.masses
    logs = np.abs(np.log(weights))
    return AssumptionReport(
        delta=float(weights.max()),
        h2_value=math.fsum(masses * logs / weights),
        span=detect_span(-np.log(weights)),
        mean_abs_log_w=math.fsum(masses * logs),
    )


def measure_moments(measure: SplittingMeasure) -> Tuple[float, float, float]:
    """(E(G), E|log W|, E(W)) as exact sums over the atoms."""

    weights = measure.weights
    masses = measure.masses
    return (
        math.fsum(masses / weights),
        math.fsum(masses * np.abs(np.log(weights))),
        math.fsum(masses * weights),
    )


def atom_cdf(measure: SplittingMeasure) -> np.ndarray:
    cdf = np.cumsum(measure.masses)
    cdf[-1] = 1.0
    return cdf


def sample_atom_indices(measure: SplittingMeasure, shape, rng: np.random.Generator) -> np.ndarray:
    """Atom indices drawn from uniforms filled in C order, so prefixes are stable."""

    if measure.is_deterministic:
        return np.zeros(shape, dtype=np.intp)
    return np.searchsorted(atom_cdf(measure), rng.random(shape), side="right")


def sample_weight(measure: SplittingMeasure, rng: np.random.Generator) -> float:
    if measure.is_deterministic:
        return measure.atoms[0][0]
    return float(measure.weights[sample_atom_indices(measure, (), rng)])


def sample_weights(measure: SplittingMeasure, size, rng: np.random.Generator) -> np.ndarray:
    return measure.weights[sample_atom_indices(measure, size, rng)]


def describe_measure(measure: SplittingMeasure) -> Dict[str, float]:
    mean_g, mean_abs_log_w, mean_w = measure_moments(measure)
    return {"mean_G": mean_g, "mean_abs_log_w": mean_abs_log_w, "mean_w": mean_w}
