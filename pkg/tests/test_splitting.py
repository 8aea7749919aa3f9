"""Tests for splitting measures."""

from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import stats

from splitstream.errors import DegenerateSplit
from splitstream.models import Branch, BranchingLaw, SplittingMeasure
from splitstream.splitting import (
    branching_mean,
    derive_splitting_measure,
    describe_measure,
    detect_span,
    measure_moments,
    sample_weight,
    sample_weights,
    validate_assumptions,
)


class TestDeriveSplittingMeasure:
    """Tests for derive_splitting_measure."""

    def test_symmetric_binary(self, symmetric_measure):
        """Test the symmetric binary law gives the single atom 1/2."""
        assert symmetric_measure.atoms == ((0.5, 1.0),)
        assert symmetric_measure.delta == 0.5
        assert symmetric_measure.mean_G == pytest.approx(2.0)

    def test_biased_binary(self, biased_measure):
        """Test that W is charged with its own size."""
        weights = [w for w, _ in biased_measure.atoms]
        masses = [q for _, q in biased_measure.atoms]
        assert weights == pytest.approx([0.3, 0.7])
        assert masses == pytest.approx([0.3, 0.7])
        assert biased_measure.delta == pytest.approx(0.7)

    def test_mixture_merges_equal_weights(self, mixture_law):
        """Test that equal weight values from different branches share one atom."""
        measure = derive_splitting_measure(mixture_law)
        atoms = dict(measure.atoms)
        assert sorted(atoms) == pytest.approx([0.2, 0.25, 0.3, 0.5])
        assert atoms[0.2] == pytest.approx(0.05)
        assert atoms[0.25] == pytest.approx(0.125)
        assert atoms[0.3] == pytest.approx(0.075)
        assert atoms[0.5] == pytest.approx(0.75)

    def test_mean_g_matches_branching_law(self, mixture_law, ternary_law, biased_law):
        """Test sum q/w equals E(G) read off the law."""
        for law in (mixture_law, ternary_law, biased_law):
            assert derive_splitting_measure(law).mean_G == pytest.approx(branching_mean(law))
        assert branching_mean(mixture_law) == pytest.approx(2.5)

    def test_degenerate_vector(self):
        """Test that a zero weight is refused before a measure is built."""
        with pytest.raises(DegenerateSplit):
            BranchingLaw(branches=(Branch.fixed(2, 1.0, [1.0, 0.0]),))


class TestSpan:
    """Tests for detect_span and validate_assumptions."""

    def test_powers_of_two(self):
        """Test that logs of powers of 2 share the span log 2."""
        span = detect_span([math.log(2), math.log(4), math.log(8)])
        assert span == pytest.approx(math.log(2))

    def test_common_fraction(self):
        """Test a span that divides the smallest value."""
        assert detect_span([1.0, 1.5]) == pytest.approx(0.5)

    def test_irrational_ratio(self):
        """Test that incommensurable values have no span."""
        assert detect_span([1.0, math.sqrt(2)]) is None

    def test_rejects_nonpositive(self):
        """Test that nonpositive values are refused."""
        with pytest.raises(ValueError):
            detect_span([0.0, 1.0])

    def test_symmetric_report(self, symmetric_measure):
        """Test the assumption report of the symmetric measure."""
        report = validate_assumptions(symmetric_measure)
        assert report.delta == 0.5
        assert report.arithmetic
        assert report.span == pytest.approx(math.log(2))
        assert report.h2_value == pytest.approx(2 * math.log(2))
        assert report.mean_abs_log_w == pytest.approx(math.log(2))

    def test_biased_is_not_arithmetic(self, biased_measure):
        """Test that the 0.3/0.7 measure is not arithmetic."""
        report = validate_assumptions(biased_measure)
        assert report.span is None
        assert not report.arithmetic

    def test_ternary_span(self, ternary_law):
        """Test the span of the thirds measure."""
        report = validate_assumptions(derive_splitting_measure(ternary_law))
        assert report.span == pytest.approx(math.log(3))

    @pytest.mark.parametrize("ratio", [1.5, 1.0 / 3.0, 1.25])
    def test_span_scales_with_log_weights(self, ratio):
        """Test that raising the weights to a power r/s multiplies the span by r/s."""
        base = SplittingMeasure.from_atoms([(0.5, 0.5), (0.25, 0.5)])
        scaled = SplittingMeasure.from_atoms([(w**ratio, q) for w, q in base.atoms])
        assert validate_assumptions(base).span == pytest.approx(math.log(2))
        assert validate_assumptions(scaled).span == pytest.approx(ratio * math.log(2))
        assert detect_span([ratio * v for v in (1.0, 1.5)]) == pytest.approx(ratio * 0.5)

    def test_nonarithmetic_survives_scaling(self, biased_measure):
        """Test that a rescaled nonarithmetic measure stays nonarithmetic."""
        scaled = SplittingMeasure.from_atoms([(w**1.5, q) for w, q in biased_measure.atoms])
        assert validate_assumptions(scaled).span is None


class TestSampling:
    """Tests for weight sampling and the measure moments."""

    def test_deterministic_draw(self, symmetric_measure, rng):
        """Test that a single atom is always drawn."""
        assert sample_weight(symmetric_measure, rng) == 0.5
        assert set(sample_weights(symmetric_measure, 50, rng).tolist()) == {0.5}

    def test_draw_frequencies(self, biased_measure, rng):
        """Test that draws follow the atom masses."""
        draws = sample_weights(biased_measure, 40_000, rng)
        share = float(np.mean(draws == biased_measure.weights[0]))
        assert abs(share - 0.3) < 4 * math.sqrt(0.3 * 0.7 / 40_000)

    def test_scalar_draws_pass_chi_square(self, rng):
        """Test sample_weight frequencies against the atom masses."""
        measure = SplittingMeasure.from_atoms([(0.2, 0.5), (0.3, 0.3), (0.5, 0.2)])
        draws = np.array([sample_weight(measure, rng) for _ in range(20_000)])
        observed = [int(np.sum(draws == w)) for w in measure.weights]
        assert sum(observed) == draws.size
        result = stats.chisquare(observed, measure.masses * draws.size)
        assert result.pvalue > 1e-3

    def test_single_draw_in_support(self, biased_measure, rng):
        """Test a scalar draw lands on an atom."""
        value = sample_weight(biased_measure, rng)
        assert any(math.isclose(value, w) for w in (0.3, 0.7))

    def test_describe_measure(self, biased_measure):
        """Test E(G), E|log W| and E(W)."""
        moments = describe_measure(biased_measure)
        assert moments["mean_G"] == pytest.approx(2.0)
        assert moments["mean_abs_log_w"] == pytest.approx(-0.3 * math.log(0.3) - 0.7 * math.log(0.7))
        assert moments["mean_w"] == pytest.approx(0.09 + 0.49)

    def test_measure_moments_of_single_atom(self, symmetric_measure):
        """Test the moment triple of W = 1/2."""
        mean_g, mean_abs_log_w, mean_w = measure_moments(symmetric_measure)
        assert mean_g == pytest.approx(2.0)
        assert mean_abs_log_w == pytest.approx(math.log(2.0))
        assert mean_w == pytest.approx(0.5)
