"""Pydantic schemas for every JSON file splitstream reads or writes."""

from __future__ import annotations

from pathlib import Path
from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .models import ArrivalLaw, Branch, BranchingLaw, SeriesParams, SplittingMeasure


class MixtureComponentPayload(BaseModel):
    """One weight vector of a mixture branch together with its probability."""

    model_config = ConfigDict(extra="forbid")

    prob: float = Field(..., gt=0, le=1)
    weights: List[float] = Field(..., min_length=2)


class BranchPayload(BaseModel):
    """A branch count G with either a fixed weight vector or a mixture of them."""

    model_config = ConfigDict(extra="forbid")

    g: int = Field(..., ge=2)
    prob: float = Field(..., gt=0, le=1)
    weights: Optional[List[float]] = None
    mixture: Optional[List[MixtureComponentPayload]] = None

    @model_validator(mode="after")
    def _one_weight_source(self) -> "BranchPayload":
        if (self.weights is None) == (self.mixture is None):
            raise ValueError("a branch needs exactly one of 'weights' or 'mixture'")
        return self

    def to_domain(self) -> Branch:
        if self.weights is not None:
            return Branch.fixed(self.g, self.prob, self.weights)
        return Branch.mixture(self.g, self.prob, [(c.prob, c.weights) for c in self.mixture or []])


class BranchingLawPayload(BaseModel):
    """Schema of a branching-law file: ``{"branches": [...]}``."""

    model_config = ConfigDict(extra="forbid")

    branches: List[BranchPayload] = Field(..., min_length=1)

    def to_domain(self) -> BranchingLaw:
        return BranchingLaw(branches=tuple(b.to_domain() for b in self.branches))


class AtomPayload(BaseModel):
    model_config = ConfigDict(extra="forbid")

    w: float = Field(..., gt=0, lt=1)
    q: float = Field(..., gt=0, le=1)


class MeasurePayload(BaseModel):
    """Schema of a splitting-measure file: ``{"atoms": [{"w": .., "q": ..}, ...]}``."""

    model_config = ConfigDict(extra="ignore")

    atoms: List[AtomPayload] = Field(..., min_length=1)

    def to_domain(self) -> SplittingMeasure:
        return SplittingMeasure.from_atoms([(a.w, a.q) for a in self.atoms])


class SeriesParamsPayload(BaseModel):
    model_config = ConfigDict(extra="forbid")

    k_max: Optional[int] = Field(None, ge=1)
    mc_paths: int = Field(100_000, ge=1)
    xinf_tol: float = Field(1e-10, gt=0, lt=1)
    regularize: bool = True
    chunk_size: int = Field(10_000, ge=1)

    def to_domain(self, measure: SplittingMeasure, seed: int, workers: int) -> SeriesParams:
        return SeriesParams.for_measure(
            measure,
            k_max=self.k_max,
            mc_paths=self.mc_paths,
            xinf_tol=self.xinf_tol,
            seed=seed,
            regularize=self.regularize,
            chunk_size=self.chunk_size,
            workers=workers,
        )


class ValidationPayload(BaseModel):
    """Sample sizes used by the cross-validation harness."""

    model_config = ConfigDict(extra="forbid")

    trials: int = Field(100_000, ge=1)
    static_trials: int = Field(1_000_000, ge=1)
    slope_n: int = Field(4096, ge=2)
    slope_trees: int = Field(10_000, ge=1)
    laplace_samples: int = Field(1_000_000, ge=2)
    probe_horizon: int = Field(100_000, ge=1000)
    probe_reps: int = Field(20, ge=1)
    probe: bool = True


class ExperimentConfig(BaseModel):
    """An experiment: which law, which threshold, which arrivals and how to estimate."""

    model_config = ConfigDict(extra="forbid")

    law: Path
    d: int = Field(2, ge=1)
    arrivals: str = "none"
    series: SeriesParamsPayload = Field(default_factory=SeriesParamsPayload)
    outputs: Path = Path("outputs")
    seed: Optional[int] = Field(None, ge=0)
    workers: Optional[int] = Field(None, ge=1)
    validation: ValidationPayload = Field(default_factory=ValidationPayload)

    @field_validator("arrivals")
    @classmethod
    def _parse_arrivals(cls, value: str) -> str:
        ArrivalLaw.parse(value)
        return value

    def arrival_law(self) -> ArrivalLaw:
        return ArrivalLaw.parse(self.arrivals)


# --- Outputs ---------------------------------------------------------------
class Provenance(BaseModel):
    """Everything needed to reproduce an output file."""

    model_config = ConfigDict(extra="forbid")

    tool: Literal["splitstream"] = "splitstream"
    version: str
    command: str
    seed: int
    config_sha256: str


class MeasureOutput(BaseModel):
    """A derived splitting measure; readable again as a measure file."""

    model_config = ConfigDict(extra="forbid")

    provenance: Provenance
    atoms: List[AtomPayload]
    delta: float
    mean_G: float
    mean_abs_log_w: float
    mean_w: float


class SolveOutput(BaseModel):
    model_config = ConfigDict(extra="forbid")

    provenance: Provenance
    lam: float
    d: int
    regularize: bool
    matrix: List[List[float]]
    matrix_std_errors: List[List[float]]
    det: float
    det_std_error: float
    C: List[float]
    C_inf: float
    std_errors: List[float]
    residuals: Dict[str, float]


class LambdaCOutput(BaseModel):
    model_config = ConfigDict(extra="forbid")

    provenance: Provenance
    d: int
    lambda_c: float
    uncertainty: float
    jitter: float
    roots: List[float]
    bracket: List[float]


class ValidationRow(BaseModel):
    model_config = ConfigDict(extra="forbid")

    criterion: str
    measured: Optional[float] = None
    expected: Optional[float] = None
    tolerance: Optional[float] = None
    seed: int
    status: Literal["pass", "fail", "skipped"]
    note: str = ""


class ValidationReport(BaseModel):
    model_config = ConfigDict(extra="forbid")

    provenance: Provenance
    d: int
    lam: float
    rows: List[ValidationRow] = Field(default_factory=list)

    @property
    def failed(self) -> bool:
        return any(row.status == "fail" for row in self.rows)


OUTPUT_SCHEMAS = {
    "derive-measure": MeasureOutput,
    "solve": SolveOutput,
    "lambda-c": LambdaCOutput,
    "validate": ValidationReport,
}
