"""Boundary matrix, constants, stability threshold, exact series and asymptotics.

Every expectation over a Poisson count N([0, lam X_k]) or a binomial count of
uniforms below pi_k is evaluated in closed form given the weight path; only the
path itself is sampled. Per-depth terms use the forward dual X*_k, which shares
the law of X_k at each fixed depth and converges on every path, so the
regularised terms decay geometrically path by path.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, replace
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, special, stats

from .arprocess import PathChunk, PathEnsemble, sample_x_inf_many
from .chunks import Moments, compensated_mean, merge_moments, side_rng
from .errors import (
    IllConditionedEstimate,
    NoSignChange,
    NotArithmetic,
    PoleError,
    SingularNearLambdaC,
    UntrustedEstimate,
)
from .models import (
    ConstantsC,
    LambdaC,
    MatrixM,
    SeriesEstimate,
    SeriesParams,
    SplittingMeasure,
    XInfSampler,
)
from .splitting import validate_assumptions

logger = logging.getLogger(__name__)

VARIANTS = ("corrected", "as_printed")
TAIL_TRUST = 1e-6
ILL_CONDITIONED_RATIO = 0.1
ERROR_FLOOR = 1e-8
CONDITIONING_FACTOR = 10.0
MAX_CONDITION = 1e12
FLUCTUATION_Y_MIN = 1e-12
FLUCTUATION_Y_MAX = 745.0


# --- Closed forms given a path -------------------------------------------
def _pmf(ell: int, y: np.ndarray) -> np.ndarray:
    """Poisson(y) probability of *ell*; zero for negative *ell*."""

    y = np.asarray(y, dtype=float)
    if ell < 0:
        return np.zeros_like(y)
    return np.exp(special.xlogy(ell, y) - y - special.gammaln(ell + 1))


def _pmf_gap(ell: int, y: np.ndarray) -> np.ndarray:
    return _pmf(ell - 1, y) - _pmf(ell, y)


def _slope_drop(ell: int, y: np.ndarray, rate: float, pi: np.ndarray) -> np.ndarray:
    """``(psi_ell(y) - psi_ell(y + rate * pi)) / pi`` with psi_ell the Poisson pmf.

    The binomial expansion of ``(y + h)**ell - y**ell`` keeps every term
    free of cancellation when ``pi`` is tiny.
    """

    h = rate * pi
    head = np.power(y, ell) * (-np.expm1(-h)) / pi
    tail = np.zeros(np.broadcast(y, pi).shape)
    for r in range(1, ell + 1):
        tail = tail + special.comb(ell, r) * np.power(y, ell - r) * rate**r * np.power(pi, r - 1)
    return np.exp(-y) / math.factorial(ell) * (head - np.exp(-h) * tail)


def _boundary_term(m: int, ell: int, y: np.ndarray, pi: np.ndarray) -> np.ndarray:
    """``(P(N = ell) - P(B + N = ell)) / pi`` with B ~ Binom(m, pi), N ~ Poisson(y)."""

    total = _pmf(ell, y) * stats.binom.sf(0, m, pi)
    for j in range(1, min(m, ell) + 1):
        total = total - stats.binom.pmf(j, m, pi) * _pmf(ell - j, y)
    return total / pi


def _phi_poly(coefficients: Sequence[float], y: np.ndarray) -> np.ndarray:
    """``sum_j coefficients[j] * P(Poisson(y) = j)``."""

    total = np.zeros_like(np.asarray(y, dtype=float))
    for j, value in enumerate(coefficients):
        if value != 0.0:
            total = total + value * _pmf(j, y)
    return total


def _shifted_delta(delta_c: np.ndarray, i: int, pmfs: Sequence[np.ndarray]) -> np.ndarray:
    """E dC_{i+N} given the Poisson pmfs of N; dC_j vanishes for j >= D."""

    total = np.zeros_like(pmfs[0])
    for j in range(delta_c.size - i):
        total = total + delta_c[i + j] * pmfs[j]
    return total


# --- Path averaging -------------------------------------------------------
@dataclass(frozen=True)
class _Average:
    mean: np.ndarray
    std_error: np.ndarray
    chunk_means: Tuple[np.ndarray, ...]


def _path_average(
    ensemble: PathEnsemble,
    depth: int,
    fn: Callable[[PathChunk], Sequence[np.ndarray]],
    workers: int = 1,
) -> List[_Average]:
    """Average per-path quantities (last axis = paths) over the whole ensemble."""

    def reduce_chunk(chunk: PathChunk):
        outputs = [np.asarray(o, dtype=float) for o in fn(chunk)]
        return [(o.sum(axis=-1), Moments.of(o)) for o in outputs], chunk.size

    parts = ensemble.map(reduce_chunk, depth, workers)
    counts = [size for _, size in parts]
    averages: List[_Average] = []
    for k in range(len(parts[0][0])):
        sums = [reduced[k][0] for reduced, _ in parts]
        mean, _ = compensated_mean(sums, counts)
        moments = merge_moments(reduced[k][1] for reduced, _ in parts)
        averages.append(
            _Average(
                mean=mean,
                std_error=np.asarray(moments.std_error, dtype=float),
                chunk_means=tuple(s / c for s, c in zip(sums, counts)),
            )
        )
    return averages


def _ensemble(measure: SplittingMeasure, params: SeriesParams, ensemble: Optional[PathEnsemble]) -> PathEnsemble:
    return ensemble if ensemble is not None else PathEnsemble.from_params(measure, params)


def _series_depth(measure: SplittingMeasure, params: SeriesParams, scale: float) -> int:
    """Depths k = 0..k_max plus the levels needed before pi_k * scale drops below 1."""

    extra = 0
    if scale > 1.0:
        extra = math.ceil(math.log(scale) / -math.log(measure.delta))
    return params.k_max + 1 + extra


def _check_constants(constants: ConstantsC, lam: float, d: int) -> None:
    if constants.d != d or abs(constants.lam - lam) > 1e-12:
        raise ValueError(
            f"constants were solved for lam={constants.lam}, d={constants.d}, not lam={lam}, d={d}"
        )


# --- Boundary matrix ------------------------------------------------------
def row_D(
    m: SplittingMeasure,
    lam: float,
    D: int,
    p: SeriesParams,
    ensemble: Optional[PathEnsemble] = None,
) -> np.ndarray:
    """E[P(N = l - 1) - P(N = l)] for l < D with N ~ Poisson(lam X_inf)."""

    if lam < 0:
        raise ValueError("lam must be nonnegative")
    paths = _ensemble(m, p, ensemble)
    (average,) = _path_average(
        paths, 1, lambda chunk: [np.stack([_pmf_gap(ell, lam * chunk.x_inf) for ell in range(D)])], p.workers
    )
    return average.mean


def _matrix_paths(chunk: PathChunk, lam: float, d: int, mean_g: float, regularize: bool) -> np.ndarray:
    pi = chunk.pi
    y = lam * chunk.x_star
    y_inf = lam * chunk.x_inf
    gaps = [_pmf_gap(ell, y_inf) for ell in range(d)]
    totals = np.zeros((d + 1, d + 1, chunk.size))
    for m in range(1, d):
        for ell in range(d):
            terms = _boundary_term(m, ell, y, pi)
            if regularize:
                terms = terms + m * gaps[ell]
            totals[m - 1, ell] = terms.sum(axis=0)
        totals[m - 1, d] = m
    for ell in range(d):
        totals[d - 1, ell] = gaps[ell]
        terms = _slope_drop(ell, y, lam, pi)
        if regularize:
            terms = terms + lam * gaps[ell]
        totals[d, ell] = terms.sum(axis=0)
    totals[d, 0] -= 1.0 / mean_g
    totals[d, d] = lam
    return totals


def _det_std_error(entries: np.ndarray, std_errors: np.ndarray) -> float:
    """First-order propagation of independent entry errors through the cofactors."""

    try:
        cofactors = np.linalg.det(entries) * np.linalg.inv(entries).T
    except np.linalg.LinAlgError:
        return float("nan")
    return float(np.sqrt(np.sum((cofactors * std_errors) ** 2)))


def assemble_matrix(
    m: SplittingMeasure,
    lam: float,
    D: int,
    p: SeriesParams,
    ensemble: Optional[PathEnsemble] = None,
    warn: bool = True,
) -> MatrixM:
    """Boundary matrix for (m, lam, D) from conditional Monte Carlo over weight paths.

    With ``p.regularize`` each depth term of boundary row ``m`` is shifted by
    ``m`` times row D and each term of the last row by ``lam`` times row D.
    Row D is estimated on the same paths, so the shift is an exact row
    operation on the sample and leaves the determinant and the solution alone.
    """

    if lam < 0:
        raise ValueError("lam must be nonnegative")
    if D < 1:
        raise ValueError("D must be at least 1")
    paths = _ensemble(m, p, ensemble)
    depth = p.k_max + 1
    logger.info(
        "assembling M: lam=%r D=%d depth=%d paths=%d regularize=%s",
        lam, D, depth, paths.n_paths if not paths.exact else 1, p.regularize,
    )
    (average,) = _path_average(
        paths, depth, lambda chunk: [_matrix_paths(chunk, lam, D, m.mean_G, p.regularize)], p.workers
    )
    entries = average.mean
    std_errors = average.std_error
    std_errors[:, D] = 0.0

    if warn:
        noisy = (std_errors > ILL_CONDITIONED_RATIO * np.abs(entries)) & (std_errors > ERROR_FLOOR)
        if noisy.any():
            cells = ", ".join(f"({r + 1},{c})" for r, c in zip(*np.nonzero(noisy)))
            warnings.warn(
                f"Monte Carlo error above {ILL_CONDITIONED_RATIO:.0%} of the entry at {cells}; "
                "raise mc_paths",
                IllConditionedEstimate,
                stacklevel=2,
            )
    return MatrixM(
        entries=entries,
        std_errors=std_errors,
        lam=lam,
        d=D,
        regularized=p.regularize,
        measure=m,
        params=p,
        det_std_error=_det_std_error(entries, std_errors),
        chunk_entries=average.chunk_means if len(average.chunk_means) > 1 else (),
    )


def det_M(M: MatrixM) -> float:
    return float(np.linalg.det(M.entries))


def det_scan(
    m: SplittingMeasure,
    D: int,
    lams: Iterable[float],
    p: SeriesParams,
) -> List[Tuple[float, float, float]]:
    """(lam, det, det std error) over a grid, all on the same weight paths."""

    paths = PathEnsemble.from_params(m, p)
    rows = []
    for lam in lams:
        matrix = assemble_matrix(m, float(lam), D, p, paths, warn=False)
        rows.append((float(lam), det_M(matrix), matrix.det_std_error))
    return rows


def _bisect(
    det: Callable[[float], float], left: float, right: float, v_left: float, v_right: float, tol: float
) -> float:
    """Bisect down to *tol*, then interpolate linearly inside the last bracket."""

    while right - left > tol:
        middle = 0.5 * (left + right)
        v_middle = det(middle)
        if v_middle == 0.0:
            return middle
        if v_left * v_middle < 0:
            right, v_right = middle, v_middle
        else:
            left, v_left = middle, v_middle
    return left - v_left * (right - left) / (v_right - v_left)


def _first_root(det: Callable[[float], float], lo: float, hi: float, tol: float, scan: int) -> float:
    grid = np.linspace(lo, hi, scan)
    values = [det(lam) for lam in grid]
    for left, right, v_left, v_right in zip(grid[:-1], grid[1:], values[:-1], values[1:]):
        if v_left == 0.0:
            return float(left)
        if v_left * v_right < 0:
            return float(_bisect(det, float(left), float(right), v_left, v_right, tol))
    if values[-1] == 0.0:
        return float(hi)
    raise NoSignChange(lo, hi, values[0], values[-1])


def find_lambda_c(
    m: SplittingMeasure,
    D: int,
    p: SeriesParams,
    bracket: Tuple[float, float] = (0.05, 0.5),
    tol: float = 1e-3,
    seeds: int = 3,
    scan: int = 9,
) -> LambdaC:
    """Smallest zero of lam -> det M_lam inside *bracket*, clipped to lam <= D - 1.

    Each seed fixes one set of weight paths for every lam, so the determinant
    is a smooth function of lam; bisection closes with a linear step in
    the last bracket. The spread of the roots over *seeds* seeds is the reported jitter.
    """

    lo, hi = float(bracket[0]), min(float(bracket[1]), float(D - 1))
    if not 0.0 <= lo < hi:
        raise NoSignChange(lo, hi, float("nan"), float("nan"))
    runs = 1 if m.is_deterministic else seeds
    roots: List[float] = []
    for offset in range(runs):
        params = p.with_seed(p.seed + offset)
        paths = PathEnsemble.from_params(m, params)

        def det(lam: float) -> float:
            return det_M(assemble_matrix(m, lam, D, params, paths, warn=False))

        root = _first_root(det, lo, hi, tol, scan)
        logger.info("seed %d: lambda_c = %.6f", params.seed, root)
        roots.append(root)
    jitter = (max(roots) - min(roots)) / 2.0
    return LambdaC(
        value=roots[0],
        uncertainty=max(tol, jitter),
        jitter=jitter,
        roots=tuple(roots),
        bracket=(lo, hi),
    )


# --- Constants ------------------------------------------------------------
def _stationary_check(measure: SplittingMeasure, constants: ConstantsC, params: SeriesParams) -> Tuple[float, float]:
    """E phi_dC(lam X_inf) on an independent sample, with its standard error."""

    sampler = XInfSampler.from_measure(measure, params.xinf_tol)
    size = 1 if measure.is_deterministic else params.mc_paths
    samples = sample_x_inf_many(sampler, size, side_rng(params.seed, 1))
    delta_c = constants.delta_vector()
    values = _phi_poly(delta_c, constants.lam * samples)
    mean = math.fsum(values) / values.size
    sample_error = float(np.std(values, ddof=1) / math.sqrt(values.size)) if values.size > 1 else 0.0

    gaps = np.array([np.mean(_pmf_gap(ell, constants.lam * samples)) for ell in range(constants.d)])
    c_errors = np.asarray(constants.std_errors[: constants.d] or np.zeros(constants.d))
    propagated = float(np.sqrt(np.sum((gaps * c_errors) ** 2)))
    return mean, math.hypot(sample_error, propagated)


def solve_constants(M: MatrixM) -> ConstantsC:
    """Solve ``M C = -e_{D+1}`` and attach residual diagnostics."""

    d = M.d
    det = det_M(M)
    floor = CONDITIONING_FACTOR * M.det_std_error if np.isfinite(M.det_std_error) else math.inf
    if not np.isfinite(det) or det == 0.0 or abs(det) < floor:
        raise SingularNearLambdaC(
            f"|det M| = {abs(det):.3g} is below the conditioning floor {floor:.3g} at lam={M.lam}"
        )
    if np.linalg.cond(M.entries) > MAX_CONDITION:
        raise SingularNearLambdaC(f"M is ill-conditioned at lam={M.lam}")
    rhs = np.zeros(d + 1)
    rhs[-1] = -1.0
    solution = np.linalg.solve(M.entries, rhs)

    chunk_solutions = []
    for entries in M.chunk_entries:
        try:
            chunk_solutions.append(np.linalg.solve(entries, rhs))
        except np.linalg.LinAlgError:
            logger.debug("skipping a singular chunk matrix")
    if len(chunk_solutions) > 1:
        spread = np.std(np.vstack(chunk_solutions), axis=0, ddof=1)
        std_errors = tuple(float(s) for s in spread / math.sqrt(len(chunk_solutions)))
    else:
        std_errors = (0.0,) * (d + 1)

    constants = ConstantsC(
        c=tuple(float(v) for v in solution[:d]),
        c_inf=float(solution[d]),
        lam=M.lam,
        d=d,
        std_errors=std_errors,
    )
    mean, error = _stationary_check(M.measure, constants, M.params)
    residuals = {"phi_delta_mean": mean, "phi_delta_std_error": error}
    for size in range(1, d):
        estimate = mean_size_series(M.measure, M.lam, d, constants, size, M.params)
        residuals[f"boundary_{size}"] = estimate.value - 1.0
    logger.info("solved C=%s C_inf=%r", constants.c, constants.c_inf)
    return replace(constants, residuals=residuals)


def binary_K(pp: float, lam: float) -> float:
    """Ratio C_1 / C_0 for the binary measure with D = 2."""

    if lam <= 0:
        raise ValueError("lam must be positive")
    if not 0.0 < pp < 1.0:
        raise ValueError("pp must lie in (0, 1)")
    if pp == 0.5:
        if lam >= 0.5:
            raise PoleError(f"1/(1 - 2 lam) has its pole at lam = 1/2, got lam={lam}")
        return 1.0 / (1.0 - 2.0 * lam)
    a, b = lam / pp, lam / (1.0 - pp)
    value = -(math.exp(-a) - math.exp(-b)) / (a * math.exp(-a) - b * math.exp(-b))
    if not math.isfinite(value) or value <= 0:
        raise PoleError(f"K is at or beyond its pole for p={pp}, lam={lam}")
    return value


# --- Exact series ---------------------------------------------------------
def _finish_series(value: float, average_total: _Average, average_tail: _Average, delta: float, label: str) -> Tuple[float, float, bool]:
    tail = abs(float(average_tail.mean))
    trusted = tail <= TAIL_TRUST * max(1.0, abs(value))
    if not trusted:
        warnings.warn(
            f"{label}: last series term {tail:.3g} is large relative to the total; raise k_max",
            UntrustedEstimate,
            stacklevel=3,
        )
    return tail * delta / (1.0 - delta), float(average_total.std_error), trusted


def mean_size_series(
    m: SplittingMeasure,
    lam: float,
    D: int,
    C: ConstantsC,
    n: int,
    p: SeriesParams,
    ensemble: Optional[PathEnsemble] = None,
) -> SeriesEstimate:
    """E(R_n) as ``1 + n C_inf - sum_i sum_k E[(1/pi_k) dC_{i+N} 1{U_(i+1) <= pi_k}]``.

    ``P(U_(i+1) <= pi) = P(Binom(n, pi) >= i + 1)``. With regularisation each
    depth term is shifted by ``n * phi_dC(lam X*_inf)``, whose sample mean is
    zero for the solved C.
    """

    _check_constants(C, lam, D)
    if n < 0:
        raise ValueError("n must be nonnegative")
    if n == 0:
        return SeriesEstimate(value=1.0, std_error=0.0, tail_bound=0.0, trusted=True)
    paths = _ensemble(m, p, ensemble)
    depth = _series_depth(m, p, n)
    delta_c = C.delta_vector()

    def per_path(chunk: PathChunk):
        pi = chunk.pi
        pmfs = [_pmf(j, lam * chunk.x_star) for j in range(D)]
        leading = stats.binom.sf(0, n, pi) / pi * _shifted_delta(delta_c, 0, pmfs)
        if p.regularize:
            leading = leading - n * _phi_poly(delta_c, lam * chunk.x_inf)
        terms = leading
        for i in range(1, D):
            terms = terms + stats.binom.sf(i, n, pi) / pi * _shifted_delta(delta_c, i, pmfs)
        return [terms.sum(axis=0), terms[-1], leading.sum(axis=0)]

    total, tail, leading = _path_average(paths, depth, per_path, p.workers)
    value = 1.0 + n * C.c_inf - float(total.mean)
    tail_bound, std_error, trusted = _finish_series(value, total, tail, m.delta, "mean_size_series")
    return SeriesEstimate(
        value=value,
        std_error=std_error,
        tail_bound=tail_bound,
        trusted=trusted,
        leading_term=float(leading.mean),
    )


def series_slope(
    m: SplittingMeasure,
    lam: float,
    D: int,
    C: ConstantsC,
    n: int,
    p: SeriesParams,
) -> float:
    """(E R_{2n} - E R_n) / n from the exact series."""

    paths = PathEnsemble.from_params(m, p)
    upper = mean_size_series(m, lam, D, C, 2 * n, p, paths).value
    lower = mean_size_series(m, lam, D, C, n, p, paths).value
    return (upper - lower) / n


def eval_phi(
    m: SplittingMeasure,
    lam: float,
    C: ConstantsC,
    x: float,
    p: SeriesParams,
    ensemble: Optional[PathEnsemble] = None,
) -> SeriesEstimate:
    """Poisson transform ``phi(x) = 1 + x C_inf + sum_k E[(phi_C(lam X_k) - phi_C(pi_k x + lam X_k)) / pi_k]``."""

    _check_constants(C, lam, C.d)
    if x < 0:
        raise ValueError("x must be nonnegative")
    if x == 0:
        return SeriesEstimate(value=1.0, std_error=0.0, tail_bound=0.0, trusted=True)
    paths = _ensemble(m, p, ensemble)
    depth = _series_depth(m, p, x)
    delta_c = C.delta_vector()

    def per_path(chunk: PathChunk):
        y = lam * chunk.x_star
        terms = np.zeros_like(chunk.pi)
        for order, value in enumerate(C.c):
            terms = terms + value * _slope_drop(order, y, x, chunk.pi)
        if p.regularize:
            terms = terms + x * _phi_poly(delta_c, lam * chunk.x_inf)
        return [terms.sum(axis=0), terms[-1]]

    total, tail = _path_average(paths, depth, per_path, p.workers)
    value = 1.0 + x * C.c_inf + float(total.mean)
    tail_bound, std_error, trusted = _finish_series(value, total, tail, m.delta, "eval_phi")
    return SeriesEstimate(value=value, std_error=std_error, tail_bound=tail_bound, trusted=trusted)


def phi_C(C: ConstantsC, x: float) -> float:
    return float(_phi_poly(C.c, np.asarray(x, dtype=float)))


def functional_residual(m: SplittingMeasure, C: ConstantsC, x: float, p: SeriesParams) -> float:
    """``phi(x) - E[phi(lam + W x) / W] - 1 + phi_C(x)`` with the W-expectation an atom sum."""

    paths = PathEnsemble.from_params(m, p)
    value = eval_phi(m, C.lam, C, x, p, paths).value
    shifted = math.fsum(
        q / w * eval_phi(m, C.lam, C, C.lam + w * x, p, paths).value for w, q in m.atoms
    )
    return value - shifted - 1.0 + phi_C(C, x)


def poisson_transform(values: Sequence[float], x: float) -> float:
    """``sum_n values[n] x**n e**-x / n!`` over the given finite sequence."""

    orders = np.arange(len(values))
    weights = stats.poisson.pmf(orders, x) if x > 0 else (orders == 0).astype(float)
    return math.fsum(np.asarray(values, dtype=float) * weights)


# --- Renewal asymptotics --------------------------------------------------
def e_series(
    m: SplittingMeasure,
    i: int,
    n: int,
    p: SeriesParams,
    ensemble: Optional[PathEnsemble] = None,
) -> SeriesEstimate:
    """``E_{i,n} = sum_k E[(1/pi_k) P(Binom(n, pi_k) >= i + 1)]``."""

    if i < 1:
        raise ValueError("E_{0,n} diverges; i must be at least 1")
    if i + 1 > n:
        return SeriesEstimate(value=0.0, std_error=0.0, tail_bound=0.0, trusted=True)
    paths = _ensemble(m, p, ensemble)
    depth = _series_depth(m, p, n)

    def per_path(chunk: PathChunk):
        terms = stats.binom.sf(i, n, chunk.pi) / chunk.pi
        return [terms.sum(axis=0), terms[-1]]

    total, tail = _path_average(paths, depth, per_path, p.workers)
    value = float(total.mean)
    tail_bound, std_error, trusted = _finish_series(value, total, tail, m.delta, "e_series")
    return SeriesEstimate(value=value, std_error=std_error, tail_bound=tail_bound, trusted=trusted)


def _check_variant(variant: str) -> None:
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")


def _renewal_prefactor(m: SplittingMeasure, mean_abs_log_w: float, variant: str) -> float:
    _check_variant(variant)
    numerator = m.mean_G if variant == "as_printed" else 1.0
    return numerator / mean_abs_log_w


def renewal_slope(m: SplittingMeasure, i: int, variant: str = "corrected") -> float:
    """Limit of E_{i,n} / n for a nonarithmetic measure (the period mean otherwise)."""

    if i < 1:
        raise ValueError("i must be at least 1")
    report = validate_assumptions(m)
    return _renewal_prefactor(m, report.mean_abs_log_w, variant) / i


def fluctuation_F(
    m: SplittingMeasure,
    i: int,
    x: float,
    variant: str = "corrected",
    method: str = "closed",
) -> float:
    """Periodic limit of E_{i,n} / n at ``x = log(n) / xi`` for a lattice measure.

    ``F_i(x) = c * xi / (1 - e^-xi) * int_0^inf exp(-xi {x - log(y)/xi}) y^(i-1) e^-y / i! dy``.
    Between the breakpoints ``y = exp(xi (x - j))`` the integrand is
    ``exp(-xi (x - j)) y^i e^-y / i!``; each piece is integrated with the
    regularised incomplete gamma function (``method="closed"``) or with
    adaptive quadrature (``method="quad"``).
    """

    if i < 1:
        raise ValueError("i must be at least 1")
    report = validate_assumptions(m)
    if report.span is None:
        raise NotArithmetic("-log W is nonarithmetic; use renewal_slope for the flat limit")
    xi = report.span
    scale = _renewal_prefactor(m, report.mean_abs_log_w, variant) * xi / -math.expm1(-xi)

    j_top = math.floor(x - math.log(FLUCTUATION_Y_MAX) / xi)
    j_bottom = math.ceil(x - math.log(FLUCTUATION_Y_MIN) / xi)
    js = np.arange(j_top, j_bottom + 1)
    lower = np.exp(xi * (x - js - 1))
    upper = np.exp(xi * (x - js))
    upper[0] = np.inf
    lower[-1] = 0.0
    weights = np.exp(-xi * (x - js))

    if method == "closed":
        order = i + 1
        mass = np.where(
            lower > i,
            special.gammaincc(order, lower) - special.gammaincc(order, upper),
            special.gammainc(order, upper) - special.gammainc(order, lower),
        )
    elif method == "quad":
        density = lambda y: y**i * math.exp(-y) / math.factorial(i)  # noqa: E731
        mass = np.array([integrate.quad(density, a, b)[0] for a, b in zip(lower, upper)])
    else:
        raise ValueError(f"unknown method {method!r}")
    return scale * math.fsum(weights * mass)


@dataclass(frozen=True)
class AsymptoticSlope:
    """Limit of E(R_n) / n: a constant, or a log-periodic function of n.

    ``coefficients[i - 1]`` is E dC_{i+N([0, lam X_inf])} for i = 1..D-1.
    """

    variant: str
    c_inf: float
    coefficients: Tuple[float, ...]
    coefficient_errors: Tuple[float, ...]
    span: Optional[float]
    measure: SplittingMeasure

    @property
    def arithmetic(self) -> bool:
        return self.span is not None

    @property
    def mean(self) -> float:
        """Flat limit, or the average over one period in the lattice case."""

        return self.c_inf - math.fsum(
            a * renewal_slope(self.measure, i, self.variant)
            for i, a in enumerate(self.coefficients, start=1)
        )

    def __call__(self, n: float) -> float:
        if not self.arithmetic:
            return self.mean
        return self.at(math.log(n) / self.span)

    def at(self, x: float) -> float:
        """The lattice limit at ``x = log(n) / span``, periodic in x with period 1."""

        if not self.arithmetic:
            raise NotArithmetic("the limit of a nonarithmetic measure does not depend on x")
        return self.c_inf - math.fsum(
            a * fluctuation_F(self.measure, i, x, self.variant)
            for i, a in enumerate(self.coefficients, start=1)
        )


def asymptotic_slope(
    m: SplittingMeasure,
    lam: float,
    D: int,
    C: ConstantsC,
    variant: str = "corrected",
    p: Optional[SeriesParams] = None,
    ensemble: Optional[PathEnsemble] = None,
) -> AsymptoticSlope:
    _check_constants(C, lam, D)
    _check_variant(variant)
    params = p if p is not None else SeriesParams.for_measure(m)
    paths = _ensemble(m, params, ensemble)
    delta_c = C.delta_vector()

    def per_path(chunk: PathChunk):
        pmfs = [_pmf(j, lam * chunk.x_inf) for j in range(D)]
        rows = [_shifted_delta(delta_c, i, pmfs) for i in range(1, D)]
        return [np.stack(rows) if rows else np.zeros((0, chunk.size))]

    (average,) = _path_average(paths, 1, per_path, params.workers)
    return AsymptoticSlope(
        variant=variant,
        c_inf=C.c_inf,
        coefficients=tuple(float(v) for v in np.atleast_1d(average.mean)),
        coefficient_errors=tuple(float(v) for v in np.atleast_1d(average.std_error)),
        span=validate_assumptions(m).span,
        measure=m,
    )
