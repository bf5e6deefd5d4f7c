"""
Pydantic models for typed configuration and results.

Every configurable knob of cohorts, graph builders, GNN architectures,
training and reporting lives here, together with the result records the
harness emits.
"""

import re
from typing import Any, Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

PhenotypeKind = Literal["categorical", "continuous"]
BuilderMethod = Literal[
    "no-edges", "random", "clinical-sim", "parisot",
    "knn-imaging", "knn-nonimaging", "knn-all",
]
ArchitectureName = Literal["mlp", "gcn", "sage", "gat", "cheb"]
LossKind = Literal["mse", "mae"]

REFERENCE_COHORT_SIZE = 6500


class PhenotypeSpec(BaseModel):
    """One non-imaging phenotype column."""
    name: str = Field(min_length=1)
    kind: PhenotypeKind

    model_config = ConfigDict(frozen=True)


class PhenotypeSchema(BaseModel):
    """Ordered non-imaging phenotypes plus the imaging feature count M."""
    phenotypes: List[PhenotypeSpec] = Field(min_length=1)
    imaging_features: int = Field(default=68, ge=1, description="Imaging feature count M")

    model_config = ConfigDict(frozen=True)

    @field_validator("phenotypes")
    @classmethod
    def _unique_names(cls, value: List[PhenotypeSpec]) -> List[PhenotypeSpec]:
        names = [p.name for p in value]
        duplicates = sorted({n for n in names if names.count(n) > 1})
        if duplicates:
            raise ValueError(f"duplicate phenotype names: {', '.join(duplicates)}")
        reserved = [n for n in names if n == "age" or re.fullmatch(r"img_\d+", n)]
        if reserved:
            raise ValueError(f"reserved column names used as phenotypes: {', '.join(reserved)}")
        return value

    @property
    def names(self) -> List[str]:
        return [p.name for p in self.phenotypes]

    @property
    def num_phenotypes(self) -> int:
        """K, the number of non-imaging phenotypes."""
        return len(self.phenotypes)

    @property
    def categorical_mask(self) -> List[bool]:
        return [p.kind == "categorical" for p in self.phenotypes]

    def imaging_columns(self) -> List[str]:
        return [f"img_{j}" for j in range(self.imaging_features)]


class SyntheticCohortConfig(BaseModel):
    """Parameters of the synthetic UK-Biobank-shaped cohort generator."""
    num_subjects: int = Field(default=1000, ge=10, description="Cohort size N")
    imaging_features: int = Field(default=68, ge=1, description="Imaging feature count M")
    categorical_phenotypes: int = Field(default=10, ge=0)
    continuous_phenotypes: int = Field(default=10, ge=0)
    categorical_levels: int = Field(default=4, ge=2)
    snr: float = Field(default=5.0, ge=0.0, description="Imaging signal-to-noise variance ratio")
    phenotype_snr: Optional[float] = Field(default=None, ge=0.0, description="Defaults to snr")
    age_min: float = 47.0
    age_max: float = 81.0
    major_weight: float = Field(default=0.7, ge=0.0, le=1.0)
    major_mean: float = 63.0
    major_std: float = Field(default=7.0, gt=0.0)
    minor_mean: float = 72.0
    minor_std: float = Field(default=5.0, gt=0.0)
    seed: int = 0

    model_config = ConfigDict(extra="forbid")

    @model_validator(mode="after")
    def _check(self) -> "SyntheticCohortConfig":
        if self.categorical_phenotypes + self.continuous_phenotypes < 1:
            raise ValueError("at least one non-imaging phenotype is required")
        if self.age_min >= self.age_max:
            raise ValueError("age_min must be smaller than age_max")
        return self

    @property
    def effective_phenotype_snr(self) -> float:
        return self.snr if self.phenotype_snr is None else self.phenotype_snr


class BuilderConfig(BaseModel):
    """Population-graph construction settings."""
    method: BuilderMethod = "knn-imaging"
    mu: float = Field(default=18.0, ge=0.0, description="Clinical match threshold, in matches")
    theta: float = Field(default=0.1, gt=0.0, description="Continuous-phenotype unit-step threshold")
    k: int = Field(default=5, ge=1, description="Neighbours per node for kNN builders")
    edge_budget_min: int = Field(default=40000, ge=0)
    edge_budget_max: int = Field(default=50000, ge=0)
    reference_size: int = Field(default=REFERENCE_COHORT_SIZE, ge=2,
                                description="Cohort size the budget is expressed for")
    scale_budget: bool = Field(default=True, description="Rescale the budget to the actual cohort size")
    fit_to_budget: bool = Field(
        default=True, description="Refit mu / k to the budget midpoint when the configured value misses the budget"
    )
    seed: int = 0

    model_config = ConfigDict(extra="forbid")

    @model_validator(mode="after")
    def _check(self) -> "BuilderConfig":
        if self.edge_budget_min > self.edge_budget_max:
            raise ValueError("edge_budget_min must not exceed edge_budget_max")
        return self


class ModelConfig(BaseModel):
    """GNN architecture settings."""
    architecture: ArchitectureName = "gcn"
    hidden_width: int = Field(default=512, ge=1)
    fc_width: int = Field(default=128, ge=1)
    cheb_order: int = Field(default=3, ge=1)
    gat_heads: int = Field(default=1, ge=1)
    leaky_slope: float = Field(default=0.2, ge=0.0)
    seed: int = 0

    model_config = ConfigDict(extra="forbid")

    @model_validator(mode="after")
    def _check(self) -> "ModelConfig":
        if self.hidden_width % self.gat_heads != 0:
            raise ValueError("hidden_width must be divisible by gat_heads")
        return self


class TrainConfig(BaseModel):
    """Optimization settings."""
    learning_rate: float = Field(default=0.001, gt=0.0)
    epochs: int = Field(default=150, ge=1)
    weight_decay: float = Field(default=0.01, ge=0.0)
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    epsilon: float = Field(default=1e-8, gt=0.0)
    loss: LossKind = "mse"
    seed: int = 0
    repeats: int = Field(default=3, ge=1, description="Seeds per benchmark cell")
    split_fractions: Tuple[float, float, float] = (0.75, 0.05, 0.20)

    model_config = ConfigDict(extra="forbid")


class ReportConfig(BaseModel):
    """Benchmark matrix and output settings."""
    output_dir: str = "reports"
    builders: List[BuilderMethod] = Field(default_factory=lambda: [
        "no-edges", "random", "parisot", "clinical-sim",
        "knn-imaging", "knn-nonimaging", "knn-all",
    ])
    models: List[ArchitectureName] = Field(default_factory=lambda: ["mlp", "gcn", "sage", "gat", "cheb"])
    workers: int = Field(default=1, ge=1)
    include_timing: bool = False

    model_config = ConfigDict(extra="forbid")


class ExperimentConfig(BaseModel):
    """Full resolved configuration of a CLI or service run."""
    cohort: SyntheticCohortConfig = Field(default_factory=SyntheticCohortConfig)
    builder: BuilderConfig = Field(default_factory=BuilderConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    report: ReportConfig = Field(default_factory=ReportConfig)

    model_config = ConfigDict(extra="forbid")


class LabelStats(BaseModel):
    """Train-set age statistics used to standardize labels."""
    mean: float
    std: float = Field(gt=0.0)

    model_config = ConfigDict(frozen=True)


class EpochRecord(BaseModel):
    """One training epoch."""
    epoch: int
    train_loss: float
    val_mae: float


class TrainHistory(BaseModel):
    """Per-epoch curves plus the selected epoch."""
    epochs: List[EpochRecord] = Field(default_factory=list)
    best_epoch: int = -1
    best_val_mae: float = float("inf")


class EvaluationResult(BaseModel):
    """Regression metrics on one index set, in years."""
    mae: float
    r2: Optional[float] = None
    brain_age_gap: float = Field(description="Mean predicted minus chronological age")
    count: int


class HomophilyReport(BaseModel):
    """Regression homophily plus structural statistics of one graph."""
    provenance: str
    ratio: Optional[float] = None
    edge_count: int
    mean_degree: float
    min_degree: int
    max_degree: int
    isolated_nodes: int

    @model_validator(mode="after")
    def _ratio_iff_edges(self) -> "HomophilyReport":
        if (self.ratio is None) != (self.edge_count == 0):
            raise ValueError("homophily ratio must be present exactly when the graph has edges")
        return self


class BenchmarkRow(BaseModel):
    """One (builder, model) cell of the benchmark matrix."""
    builder: str
    model: str
    mae_mean: Optional[float] = None
    mae_std: Optional[float] = None
    r2_mean: Optional[float] = None
    r2_std: Optional[float] = None
    gap_mean: Optional[float] = None
    maes: List[float] = Field(default_factory=list)
    r2s: List[Optional[float]] = Field(default_factory=list)
    homophily: Optional[float] = None
    edge_count: int = 0
    seeds: List[int] = Field(default_factory=list)
    histories: List[TrainHistory] = Field(default_factory=list)
    wall_time: Optional[float] = None
    error: Optional[str] = None


class BenchmarkReport(BaseModel):
    """The builder × model matrix with full config provenance."""
    rows: List[BenchmarkRow] = Field(default_factory=list)
    graphs: Dict[str, HomophilyReport] = Field(default_factory=dict)
    config: Dict[str, Any] = Field(default_factory=dict)

    def row(self, builder: str, model: str) -> Optional[BenchmarkRow]:
        for r in self.rows:
            if r.builder == builder and r.model == model:
                return r
        return None
