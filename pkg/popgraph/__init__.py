"""
popgraph - population graphs and graph neural networks for brain-age regression.

Builds subject-similarity graphs over a cohort with several construction
methods, trains GCN, GraphSAGE, GAT, Chebyshev and MLP regressors with a
small reverse-mode autodiff engine, and benchmarks every pairing.
"""

__version__ = "0.1.0"

from popgraph.errors import ConfigError, DataError, NumericalError, PopGraphError, ShapeError
from popgraph.models import (
    BenchmarkReport,
    BenchmarkRow,
    BuilderConfig,
    EvaluationResult,
    ExperimentConfig,
    HomophilyReport,
    ModelConfig,
    PhenotypeSchema,
    PhenotypeSpec,
    ReportConfig,
    SyntheticCohortConfig,
    TrainConfig,
    TrainHistory,
)
from popgraph.cohort import Cohort, Split, generate_synthetic, load_cohort, normalize, split
from popgraph.graph import PopulationGraph, load_graph, save_graph
from popgraph.builders import BUILDERS, build_graph
from popgraph.metrics import degree_stats, homophily
from popgraph.gnn import ARCHITECTURES, forward, init_params
from popgraph.training import evaluate, train
from popgraph.benchmark import benchmark_matrix, run_experiment, write_report

__all__ = [
    "__version__",
    "PopGraphError", "ConfigError", "DataError", "NumericalError", "ShapeError",
    "BenchmarkReport", "BenchmarkRow", "BuilderConfig", "EvaluationResult", "ExperimentConfig",
    "HomophilyReport", "ModelConfig", "PhenotypeSchema", "PhenotypeSpec", "ReportConfig",
    "SyntheticCohortConfig", "TrainConfig", "TrainHistory",
    "Cohort", "Split", "generate_synthetic", "load_cohort", "normalize", "split",
    "PopulationGraph", "load_graph", "save_graph",
    "BUILDERS", "build_graph",
    "degree_stats", "homophily",
    "ARCHITECTURES", "forward", "init_params",
    "evaluate", "train",
    "benchmark_matrix", "run_experiment", "write_report",
]
