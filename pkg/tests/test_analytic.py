"""Tests for the boundary matrix, constants, threshold, series and asymptotics."""

from __future__ import annotations

import math

import numpy as np
import pytest

from splitstream.analytic import (
    AsymptoticSlope,
    _first_root,
    _pmf,
    assemble_matrix,
    asymptotic_slope,
    binary_K,
    det_M,
    det_scan,
    e_series,
    eval_phi,
    find_lambda_c,
    fluctuation_F,
    functional_residual,
    mean_size_series,
    phi_C,
    poisson_transform,
    renewal_slope,
    row_D,
    series_slope,
    solve_constants,
)
from splitstream.errors import NoSignChange, NotArithmetic, PoleError
from splitstream.models import ArrivalLaw, ConstantsC, SeriesParams
from splitstream.simulation import estimate_mean_size, static_mean_sizes
from splitstream.splitting import derive_splitting_measure

LOG2 = math.log(2.0)


def _solve(measure, lam, d, params):
    return solve_constants(assemble_matrix(measure, lam, d, params))


class TestClosedForms:
    """Tests for the Poisson helpers and row D."""

    def test_pmf(self):
        """Test the Poisson pmf, including ell < 0 and y = 0."""
        assert _pmf(-1, np.array([1.0])).tolist() == [0.0]
        assert _pmf(0, np.array([0.0])).tolist() == [1.0]
        assert _pmf(2, np.array([1.5]))[0] == pytest.approx(1.5**2 * math.exp(-1.5) / 2)

    def test_row_d_at_zero_rate(self, symmetric_measure, exact_params):
        """Test row D is (-1, 1) when no items arrive."""
        assert row_D(symmetric_measure, 0.0, 2, exact_params).tolist() == pytest.approx([-1.0, 1.0])

    def test_row_d_sums_to_minus_pmf(self, symmetric_measure, exact_params):
        """Test the telescoping sum of row D."""
        row = row_D(symmetric_measure, 0.2, 3, exact_params)
        assert row.sum() == pytest.approx(-_pmf(2, np.array([0.4]))[0])


class TestMatrix:
    """Tests for assemble_matrix and solve_constants."""

    def test_static_symmetric_matrix(self, symmetric_measure, exact_params):
        """Test M for halves with no arrivals and d = 2."""
        matrix = assemble_matrix(symmetric_measure, 0.0, 2, exact_params)
        expected = [[0.0, 0.0, 1.0], [-1.0, 1.0, 0.0], [-0.5, 0.0, 0.0]]
        assert np.allclose(matrix.entries, expected, atol=1e-9)
        assert det_M(matrix) == pytest.approx(0.5)
        assert matrix.entry(3, 0) == pytest.approx(-0.5)

    def test_static_symmetric_constants(self, symmetric_measure, exact_params):
        """Test C = (2, 2) and C_inf = 0 without arrivals."""
        constants = _solve(symmetric_measure, 0.0, 2, exact_params)
        assert constants.c == pytest.approx((2.0, 2.0), abs=1e-9)
        assert constants.c_inf == pytest.approx(0.0, abs=1e-9)

    def test_static_ternary_constants(self, ternary_law):
        """Test every C_j equals E(G) = 3 for thirds with d = 3."""
        measure = derive_splitting_measure(ternary_law)
        constants = _solve(measure, 0.0, 3, SeriesParams.for_measure(measure))
        assert constants.c == pytest.approx((3.0, 3.0, 3.0), abs=1e-8)
        assert constants.c_inf == pytest.approx(0.0, abs=1e-9)

    def test_static_biased_constants_are_exact(self, biased_measure, mc_params):
        """Test that sampled paths give the exact constants when lam = 0."""
        constants = _solve(biased_measure, 0.0, 2, mc_params)
        assert constants.c == pytest.approx((2.0, 2.0), abs=1e-9)
        assert constants.c_inf == pytest.approx(0.0, abs=1e-9)

    def test_regularization_does_not_change_solution(self, symmetric_measure, exact_params):
        """Test that shifted rows give the same determinant and constants."""
        shifted = assemble_matrix(symmetric_measure, 0.1, 2, exact_params)
        raw = assemble_matrix(symmetric_measure, 0.1, 2, exact_params.with_regularize(False))
        assert shifted.regularized and not raw.regularized
        assert det_M(shifted) == pytest.approx(det_M(raw), rel=1e-8)
        assert solve_constants(shifted).as_vector() == pytest.approx(
            solve_constants(raw).as_vector(), rel=1e-7
        )

    def test_symmetric_ratio(self, symmetric_measure, exact_params):
        """Test C_1 / C_0 = 1 / (1 - 2 lam) for halves."""
        constants = _solve(symmetric_measure, 0.1, 2, exact_params)
        assert constants.c[1] / constants.c[0] == pytest.approx(1.25, rel=1e-5)

    def test_biased_ratio(self, biased_measure, mc_params):
        """Test the sampled C_1 / C_0 against the closed form within four standard errors."""
        constants = _solve(biased_measure, 0.1, 2, mc_params)
        c0, c1 = constants.c
        e0, e1 = constants.std_errors[:2]
        ratio_error = math.hypot(e1 / c0, c1 * e0 / c0**2)
        assert abs(c1 / c0 - binary_K(0.3, 0.1)) <= 4 * ratio_error + 1e-6

    def test_residuals_are_attached(self, symmetric_measure, exact_params):
        """Test the boundary and stationary residuals of a solved system."""
        constants = _solve(symmetric_measure, 0.1, 2, exact_params)
        assert abs(constants.residuals["boundary_1"]) < 1e-2
        assert abs(constants.residuals["phi_delta_mean"]) < 1e-6

    def test_lam_validation(self, symmetric_measure, exact_params):
        """Test negative rates and empty systems are refused."""
        with pytest.raises(ValueError):
            assemble_matrix(symmetric_measure, -0.1, 2, exact_params)
        with pytest.raises(ValueError):
            assemble_matrix(symmetric_measure, 0.1, 0, exact_params)


class TestBinaryK:
    """Tests for binary_K."""

    def test_symmetric(self):
        """Test the symmetric closed form."""
        assert binary_K(0.5, 0.1) == pytest.approx(1.25)
        assert binary_K(0.5, 0.2) == pytest.approx(1.0 / 0.6)

    def test_pole(self):
        """Test the pole at lam = 1/2."""
        with pytest.raises(PoleError):
            binary_K(0.5, 0.5)

    def test_swap_symmetry(self):
        """Test that p and 1 - p give the same ratio."""
        assert binary_K(0.3, 0.1) == pytest.approx(binary_K(0.7, 0.1))

    def test_close_to_symmetric(self):
        """Test continuity in p near 1/2."""
        assert binary_K(0.4999, 0.1) == pytest.approx(1.25, rel=1e-3)

    def test_validation(self):
        """Test invalid arguments."""
        with pytest.raises(ValueError):
            binary_K(0.3, 0.0)
        with pytest.raises(ValueError):
            binary_K(1.0, 0.1)


class TestLambdaC:
    """Tests for det_scan and find_lambda_c."""

    def test_symmetric_threshold(self, symmetric_measure, exact_params):
        """Test lambda_c for halves with d = 2."""
        result = find_lambda_c(symmetric_measure, 2, exact_params)
        assert 0.30 <= result.value <= 0.40
        assert result.roots == (result.value,)
        assert result.jitter == 0.0

    def test_no_sign_change(self, symmetric_measure, exact_params):
        """Test a bracket below the threshold."""
        with pytest.raises(NoSignChange):
            find_lambda_c(symmetric_measure, 2, exact_params, bracket=(0.05, 0.2))

    def test_bracket_clipped_to_d_minus_one(self, symmetric_measure, exact_params):
        """Test that the upper end never exceeds d - 1."""
        result = find_lambda_c(symmetric_measure, 2, exact_params, bracket=(0.05, 5.0))
        assert result.bracket == (0.05, 1.0)
        assert 0.30 <= result.value <= 0.40
        with pytest.raises(NoSignChange):
            find_lambda_c(symmetric_measure, 1, exact_params)

    def test_root_interpolates_inside_last_bracket(self):
        """Test that a linear determinant gives its exact zero, not a bisection midpoint."""
        assert _first_root(lambda lam: lam - 0.3217, 0.05, 0.5, 1e-3, 9) == pytest.approx(0.3217, abs=1e-12)
        assert _first_root(lambda lam: 0.4123 - lam, 0.05, 0.5, 1e-2, 5) == pytest.approx(0.4123, abs=1e-12)

    def test_sampled_roots_spread_across_seeds(self, biased_measure):
        """Test that sampled measures give distinct per-seed roots and a positive jitter."""
        params = SeriesParams.for_measure(biased_measure, mc_paths=4_000, chunk_size=1_000, seed=11)
        result = find_lambda_c(biased_measure, 2, params)
        assert len(set(result.roots)) == len(result.roots) == 3
        assert result.jitter > 0.0
        assert min(result.roots) <= result.value <= max(result.roots)

    def test_det_scan(self, symmetric_measure, exact_params):
        """Test the determinant changes sign across the threshold."""
        rows = det_scan(symmetric_measure, 2, [0.0, 0.2, 0.42], exact_params)
        assert [lam for lam, _, _ in rows] == [0.0, 0.2, 0.42]
        assert rows[0][1] == pytest.approx(0.5)
        assert rows[1][1] * rows[2][1] < 0


class TestSeries:
    """Tests for mean_size_series, eval_phi and the functional equation."""

    def test_static_mean_sizes(self, symmetric_measure, exact_params):
        """Test E R_2 = 5 and E R_3 = 23/3 without arrivals."""
        constants = _solve(symmetric_measure, 0.0, 2, exact_params)
        assert mean_size_series(symmetric_measure, 0.0, 2, constants, 2, exact_params).value == pytest.approx(5.0, rel=1e-6)
        assert mean_size_series(symmetric_measure, 0.0, 2, constants, 3, exact_params).value == pytest.approx(
            23.0 / 3.0, rel=1e-6
        )
        assert mean_size_series(symmetric_measure, 0.0, 2, constants, 0, exact_params).value == 1.0

    def test_phi_c_is_poisson_mixture(self):
        """Test phi_C is the Poisson-weighted sum of the boundary constants."""
        constants = ConstantsC(c=(2.0, 2.0), c_inf=0.0, lam=0.0, d=2)
        assert phi_C(constants, 0.0) == pytest.approx(2.0)
        assert phi_C(constants, 1.5) == pytest.approx(2.0 * math.exp(-1.5) * 2.5)

    def test_agrees_with_recursion(self, symmetric_law, symmetric_measure, exact_params):
        """Test the series against the exact recursion up to n = 20."""
        constants = _solve(symmetric_measure, 0.0, 2, exact_params)
        exact = static_mean_sizes(symmetric_law, 2, 20)
        for n in (5, 10, 20):
            estimate = mean_size_series(symmetric_measure, 0.0, 2, constants, n, exact_params)
            assert estimate.value == pytest.approx(exact[n], rel=1e-6)
            assert estimate.trusted

    def test_constants_must_match(self, symmetric_measure, exact_params):
        """Test that constants solved for another rate are refused."""
        constants = _solve(symmetric_measure, 0.0, 2, exact_params)
        with pytest.raises(ValueError):
            mean_size_series(symmetric_measure, 0.1, 2, constants, 2, exact_params)

    def test_series_slope(self, symmetric_measure, exact_params):
        """Test the finite-n slope approaches 2 / log 2 for halves."""
        constants = _solve(symmetric_measure, 0.0, 2, exact_params)
        slope = series_slope(symmetric_measure, 0.0, 2, constants, 1024, exact_params)
        assert slope == pytest.approx(2.0 / LOG2, rel=1e-2)

    def test_eval_phi_matches_poisson_transform(self, symmetric_law, symmetric_measure, exact_params):
        """Test phi(x) against the Poisson transform of the exact recursion."""
        constants = _solve(symmetric_measure, 0.0, 2, exact_params)
        exact = static_mean_sizes(symmetric_law, 2, 60)
        for x in (0.5, 1.5, 4.0):
            value = eval_phi(symmetric_measure, 0.0, constants, x, exact_params).value
            assert value == pytest.approx(poisson_transform(exact, x), rel=1e-6)
        assert eval_phi(symmetric_measure, 0.0, constants, 0.0, exact_params).value == 1.0

    def test_functional_residual(self, symmetric_measure, exact_params):
        """Test the functional equation is met by the solved phi."""
        constants = _solve(symmetric_measure, 0.1, 2, exact_params)
        for x in (0.5, 2.0, 5.0):
            residual = functional_residual(symmetric_measure, constants, x, exact_params)
            phi = eval_phi(symmetric_measure, 0.1, constants, x, exact_params).value
            assert abs(residual) <= 1e-2 * abs(phi)

    def test_poisson_transform_at_zero(self):
        """Test that the transform at 0 is the first value."""
        assert poisson_transform([3.0, 7.0], 0.0) == 3.0


class TestRenewal:
    """Tests for e_series, renewal_slope, fluctuation_F and asymptotic_slope."""

    def test_e_series_edges(self, symmetric_measure, exact_params):
        """Test i = 0 is refused and small n gives zero."""
        with pytest.raises(ValueError):
            e_series(symmetric_measure, 0, 10, exact_params)
        assert e_series(symmetric_measure, 2, 2, exact_params).value == 0.0

    def test_e_series_slope(self, symmetric_measure, exact_params):
        """Test E_{1,n} / n tends to 1 / log 2 for halves."""
        n = 2**16
        value = e_series(symmetric_measure, 1, n, exact_params).value
        assert value / n == pytest.approx(1.0 / LOG2, rel=1e-3)

    def test_renewal_slope(self, symmetric_measure, biased_measure):
        """Test both prefactor variants."""
        assert renewal_slope(symmetric_measure, 1) == pytest.approx(1.0 / LOG2)
        assert renewal_slope(symmetric_measure, 2) == pytest.approx(0.5 / LOG2)
        assert renewal_slope(symmetric_measure, 1, "as_printed") == pytest.approx(2.0 / LOG2)
        entropy = -0.3 * math.log(0.3) - 0.7 * math.log(0.7)
        assert renewal_slope(biased_measure, 1) == pytest.approx(1.0 / entropy)
        with pytest.raises(ValueError):
            renewal_slope(symmetric_measure, 1, "printed")

    def test_fluctuation_needs_lattice(self, biased_measure):
        """Test that a nonarithmetic measure has no fluctuation."""
        with pytest.raises(NotArithmetic):
            fluctuation_F(biased_measure, 1, 0.3)

    def test_fluctuation_methods_agree(self, symmetric_measure):
        """Test the incomplete gamma pieces against quadrature."""
        for x in (0.0, 0.3, 0.75):
            closed = fluctuation_F(symmetric_measure, 1, x)
            quad = fluctuation_F(symmetric_measure, 1, x, method="quad")
            assert closed == pytest.approx(quad, rel=1e-6)

    def test_fluctuation_is_periodic(self, symmetric_measure):
        """Test F_i(x + 1) = F_i(x)."""
        assert fluctuation_F(symmetric_measure, 2, 0.4) == pytest.approx(
            fluctuation_F(symmetric_measure, 2, 1.4), rel=1e-9
        )

    def test_fluctuation_period_mean(self, symmetric_measure):
        """Test the average over one period equals the renewal slope."""
        for i in (1, 2):
            grid = np.arange(64) / 64
            mean = np.mean([fluctuation_F(symmetric_measure, i, x) for x in grid])
            assert mean == pytest.approx(renewal_slope(symmetric_measure, i), rel=1e-6)

    def test_fluctuation_matches_e_series(self, symmetric_measure, exact_params):
        """Test F_1 at x = log2(n) against E_{1,n} / n."""
        n = 50_000
        expected = e_series(symmetric_measure, 1, n, exact_params).value / n
        assert fluctuation_F(symmetric_measure, 1, math.log2(n)) == pytest.approx(expected, rel=1e-3)

    def test_unknown_method(self, symmetric_measure):
        """Test that unknown integration methods are refused."""
        with pytest.raises(ValueError):
            fluctuation_F(symmetric_measure, 1, 0.3, method="simpson")

    def test_static_asymptotic_slope(self, symmetric_measure, exact_params):
        """Test the limit 2 / log 2 of E R_n / n, and 4 / log 2 with E(G) in the prefactor."""
        constants = _solve(symmetric_measure, 0.0, 2, exact_params)
        corrected = asymptotic_slope(symmetric_measure, 0.0, 2, constants, p=exact_params)
        printed = asymptotic_slope(symmetric_measure, 0.0, 2, constants, "as_printed", exact_params)
        assert corrected.arithmetic
        assert corrected.coefficients == pytest.approx((-2.0,))
        assert corrected.mean == pytest.approx(2.0 / LOG2)
        assert printed.mean == pytest.approx(4.0 / LOG2)
        assert corrected(1000.0) == pytest.approx(2.0 / LOG2, rel=1e-3)

    def test_slope_at_x(self, symmetric_measure, biased_measure, exact_params):
        """Test the lattice limit as a function of x = log(n) / span."""
        constants = _solve(symmetric_measure, 0.0, 2, exact_params)
        slope = asymptotic_slope(symmetric_measure, 0.0, 2, constants, p=exact_params)
        assert slope.at(0.3) == pytest.approx(slope.at(1.3))
        assert slope.at(math.log(1000.0) / LOG2) == pytest.approx(slope(1000.0))
        flat = AsymptoticSlope(
            variant="corrected", c_inf=0.0, coefficients=(-2.0,), coefficient_errors=(0.0,),
            span=None, measure=biased_measure,
        )
        with pytest.raises(NotArithmetic):
            flat.at(0.3)

    def test_slope_agrees_with_series(self, symmetric_measure, exact_params):
        """Test the corrected limit against the exact finite-n slope."""
        constants = _solve(symmetric_measure, 0.0, 2, exact_params)
        limit = asymptotic_slope(symmetric_measure, 0.0, 2, constants, p=exact_params).mean
        slope = series_slope(symmetric_measure, 0.0, 2, constants, 2048, exact_params)
        assert abs(slope - limit) / limit < 0.03


@pytest.mark.slow
class TestAcceptance:
    """Monte Carlo checks of the dynamic series against simulated trees."""

    def test_dynamic_series_matches_simulation(self, biased_law, biased_measure, mc_params):
        """Test E R_8 from the series against simulation with Poisson(0.1) arrivals."""
        constants = _solve(biased_measure, 0.1, 2, mc_params)
        series = mean_size_series(biased_measure, 0.1, 2, constants, 8, mc_params)
        sim = estimate_mean_size(8, 2, ArrivalLaw.poisson(0.1), biased_law, 20_000, rng=17)
        band = 4 * math.hypot(series.std_error, sim.std_error) + series.tail_bound
        assert abs(series.value - sim.mean) <= band

    def test_symmetric_dynamic_matches_simulation(self, symmetric_law, symmetric_measure, exact_params):
        """Test E R_16 for halves with Poisson(0.2) arrivals."""
        constants = _solve(symmetric_measure, 0.2, 2, exact_params)
        series = mean_size_series(symmetric_measure, 0.2, 2, constants, 16, exact_params)
        sim = estimate_mean_size(16, 2, ArrivalLaw.poisson(0.2), symmetric_law, 20_000, rng=23)
        assert abs(series.value - sim.mean) <= 4 * sim.std_error + series.tail_bound
