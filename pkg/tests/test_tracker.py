"""Tests for the cross-validation harness."""

from __future__ import annotations

import json

import pytest

from splitstream.models import ArrivalLaw, SeriesParams
from splitstream.splitting import derive_splitting_measure
from splitstream.storage import load_config
from splitstream.tracker import DYNAMIC_CRITERIA, ValidationHarness, run_validate

SMALL = dict(
    trials=500,
    static_trials=2_000,
    slope_n=256,
    slope_trees=200,
    laplace_samples=2_000,
    probe_horizon=2_000,
    probe_reps=2,
)


def _harness(law, arrivals, probe=False, d=2):
    measure = derive_splitting_measure(law)
    params = SeriesParams.for_measure(measure, mc_paths=2_000, chunk_size=500, seed=4)
    return ValidationHarness(law=law, d=d, arrivals=arrivals, params=params, probe=probe, **SMALL)


def _by_name(rows):
    return {row.criterion: row for row in rows}


class TestValidationHarness:
    """Tests for ValidationHarness."""

    def test_rejects_d_zero(self, symmetric_law):
        """Test that d must be positive."""
        with pytest.raises(ValueError):
            _harness(symmetric_law, ArrivalLaw.none(), d=0)

    def test_static_rows_pass(self, symmetric_law):
        """Test the deterministic static and renewal rows for halves."""
        harness = _harness(symmetric_law, ArrivalLaw.none())
        rows = _by_name(harness.run())
        for name in (
            "static_series",
            "static_constants_C",
            "static_constants_C_inf",
            "renewal_mean",
            "renewal_periodicity",
            "fluctuation_mean_i1",
            "fluctuation_mean_i2",
            "laplace_closed_form_s0.1",
        ):
            assert rows[name].status == "pass", name
        assert rows["static_series"].expected == pytest.approx(5.0)

    def test_dynamic_rows_skipped_without_arrivals(self, symmetric_law):
        """Test that every analytic dynamic row is skipped with no arrivals."""
        harness = _harness(symmetric_law, ArrivalLaw.none())
        rows = _by_name(harness.run())
        assert harness.lam == 0.0
        for name in DYNAMIC_CRITERIA:
            assert rows[name].status == "skipped"
        assert rows["lambda_c"].status == "skipped"

    def test_dynamic_rows_skipped_above_threshold(self, symmetric_law):
        """Test that a rate above lambda_c skips the analytic rows."""
        harness = _harness(symmetric_law, ArrivalLaw.poisson(0.6))
        rows = _by_name(harness.run())
        assert rows["functional_residual"].status == "skipped"
        assert "lambda_c" in rows["functional_residual"].note
        assert rows["lambda_c_bound"].status == "pass"
        assert rows["stability_probe"].status == "skipped"
        assert 0.30 <= harness.lambda_c().value <= 0.40

    def test_nonbinary_and_nonlattice(self, biased_law, mixture_law):
        """Test the rows that depend on the shape of the law."""
        biased = _by_name(_harness(biased_law, ArrivalLaw.none()).run())
        assert biased["fluctuation_mean"].status == "skipped"
        assert "x_inf_uniform_ks" in biased
        mixture = _by_name(_harness(mixture_law, ArrivalLaw.none()).run())
        assert mixture["binary_K"].status == "skipped"
        assert mixture["laplace_closed_form"].status == "skipped"

    def test_rows_carry_seed(self, symmetric_law):
        """Test that every row records the seed it ran with."""
        rows = _harness(symmetric_law, ArrivalLaw.none()).run()
        assert rows
        assert {row.seed for row in rows} == {4}


class TestRunValidate:
    """Tests for run_validate."""

    def test_from_config(self, tmp_path, law_file):
        """Test a small config end to end."""
        config_path = tmp_path / "run.json"
        config_path.write_text(
            json.dumps(
                {
                    "law": law_file.name,
                    "d": 2,
                    "arrivals": "none",
                    "seed": 9,
                    "series": {"mc_paths": 1_000},
                    "validation": {**SMALL, "probe": False},
                }
            ),
            encoding="utf8",
        )
        report = run_validate(load_config(config_path))
        assert report.d == 2
        assert report.lam == 0.0
        assert report.provenance.command == "validate"
        assert report.provenance.seed == 9
        assert {row.status for row in report.rows} <= {"pass", "fail", "skipped"}
        assert any(row.criterion == "static_series" for row in report.rows)
