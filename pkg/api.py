"""
FastAPI service for the population-graph benchmark.

Exposes graph construction and benchmark runs over HTTP so that cohorts can
be analysed remotely with the same typed configuration as the CLI.
"""

import logging
from contextlib import asynccontextmanager
from typing import Any, Dict, List

from fastapi import FastAPI, HTTPException, status
from pydantic import BaseModel, Field

from popgraph import __version__
from popgraph.benchmark import report_values, run_experiment
from popgraph.builders import BUILDERS, build_graph
from popgraph.cohort import generate_synthetic
from popgraph.errors import ConfigError, DataError, NumericalError, PopGraphError
from popgraph.gnn import ARCHITECTURES
from popgraph.metrics import homophily_report
from popgraph.models import BuilderConfig, ExperimentConfig, HomophilyReport, SyntheticCohortConfig


logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)


@asynccontextmanager
async def lifespan(app: FastAPI):
    """Lifecycle manager for FastAPI application."""
    logger.info(f"popgraph service starting up with builders: {', '.join(BUILDERS.names())}")
    yield
    logger.info("popgraph service shutting down...")


app = FastAPI(
    title="popgraph API",
    description="Population-graph construction and GNN brain-age benchmarking",
    version=__version__,
    lifespan=lifespan
)


class HealthResponse(BaseModel):
    """Health check response."""
    status: str
    version: str
    builders: List[str]
    architectures: List[str]


class GraphRequest(BaseModel):
    """Request for building one population graph on a synthetic cohort."""
    cohort: SyntheticCohortConfig = Field(default_factory=SyntheticCohortConfig,
                                          description="Synthetic cohort parameters")
    builder: BuilderConfig = Field(default_factory=BuilderConfig, description="Graph construction settings")


class GraphResponse(BaseModel):
    """Structural summary of a built graph."""
    provenance: Dict[str, Any]
    report: HomophilyReport


def _http_error(error: PopGraphError) -> HTTPException:
    if isinstance(error, ConfigError):
        code = status.HTTP_400_BAD_REQUEST
    elif isinstance(error, DataError):
        code = status.HTTP_422_UNPROCESSABLE_ENTITY
    elif isinstance(error, NumericalError):
        code = status.HTTP_500_INTERNAL_SERVER_ERROR
    else:
        code = status.HTTP_400_BAD_REQUEST
    return HTTPException(status_code=code, detail=f"{type(error).__name__}: {error}")


@app.get("/health", response_model=HealthResponse)
async def health():
    """Health check endpoint."""
    return HealthResponse(
        status="healthy",
        version=__version__,
        builders=BUILDERS.names(),
        architectures=ARCHITECTURES.names(),
    )


@app.post("/graphs", response_model=GraphResponse)
def graphs(request: GraphRequest):
    """
    Generate a synthetic cohort and build one graph on it.

    Example:
        POST /graphs {"cohort": {"num_subjects": 200}, "builder": {"method": "knn-imaging"}}
    """
    logger.info(f"[API] graph request: {request.builder.method} on N={request.cohort.num_subjects}")
    try:
        graph = build_graph(generate_synthetic(request.cohort), request.builder)
    except PopGraphError as e:
        logger.error(f"[API] graph request failed: {e}")
        raise _http_error(e)
    return GraphResponse(provenance=graph.provenance, report=homophily_report(graph))


@app.post("/benchmark")
def benchmark(config: ExperimentConfig) -> Dict[str, Any]:
    """Run a benchmark matrix and return the machine-readable report."""
    logger.info(f"[API] benchmark request: {len(config.report.builders)} builders x {len(config.report.models)} models")
    try:
        report = run_experiment(config)
    except PopGraphError as e:
        logger.error(f"[API] benchmark failed: {e}")
        raise _http_error(e)
    return report_values(report, config.report.include_timing)


if __name__ == "__main__":
    import uvicorn
    uvicorn.run(app, host="0.0.0.0", port=5000)
