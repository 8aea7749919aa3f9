"""Pytest configuration and shared fixtures."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from splitstream.models import Branch, BranchingLaw, SeriesParams, SplittingMeasure
from splitstream.splitting import derive_splitting_measure


@pytest.fixture
def symmetric_law() -> BranchingLaw:
    """Binary splitting into halves."""
    return BranchingLaw.symmetric(2)


@pytest.fixture
def biased_law() -> BranchingLaw:
    """Binary splitting with weights 0.3 and 0.7."""
    return BranchingLaw.binary(0.3)


@pytest.fixture
def ternary_law() -> BranchingLaw:
    """Ternary splitting into thirds."""
    return BranchingLaw.symmetric(3)


@pytest.fixture
def mixture_law() -> BranchingLaw:
    """G = 2 or 3 with probability 1/2 each; the ternary branch mixes two vectors."""
    return BranchingLaw(
        branches=(
            Branch.fixed(2, 0.5, [0.5, 0.5]),
            Branch.mixture(3, 0.5, [(0.5, [0.2, 0.3, 0.5]), (0.5, [0.25, 0.25, 0.5])]),
        )
    )


@pytest.fixture
def symmetric_measure(symmetric_law: BranchingLaw) -> SplittingMeasure:
    return derive_splitting_measure(symmetric_law)


@pytest.fixture
def biased_measure(biased_law: BranchingLaw) -> SplittingMeasure:
    return derive_splitting_measure(biased_law)


@pytest.fixture
def third_measure() -> SplittingMeasure:
    """The single atom W = 1/3."""
    return SplittingMeasure.from_atoms([(1.0 / 3.0, 1.0)])


@pytest.fixture
def exact_params(symmetric_measure: SplittingMeasure) -> SeriesParams:
    """Series settings for single-atom measures (one exact path)."""
    return SeriesParams.for_measure(symmetric_measure)


@pytest.fixture
def mc_params(biased_measure: SplittingMeasure) -> SeriesParams:
    """Small Monte Carlo settings split into ten chunks."""
    return SeriesParams.for_measure(biased_measure, mc_paths=20_000, chunk_size=2_000, seed=11)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture
def law_file(tmp_path: Path, symmetric_law: BranchingLaw) -> Path:
    """Symmetric binary law written to a temporary JSON file."""
    path = tmp_path / "symmetric.json"
    path.write_text(json.dumps(symmetric_law.to_dict()), encoding="utf8")
    return path


@pytest.fixture
def biased_law_file(tmp_path: Path, biased_law: BranchingLaw) -> Path:
    path = tmp_path / "biased.json"
    path.write_text(json.dumps(biased_law.to_dict()), encoding="utf8")
    return path


@pytest.fixture
def output_dir(tmp_path: Path) -> Path:
    """A fresh directory for command outputs."""
    out = tmp_path / "outputs"
    out.mkdir()
    return out
