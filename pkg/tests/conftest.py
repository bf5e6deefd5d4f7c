import numpy as np
import pytest

from popgraph.cohort import Cohort, generate_synthetic
from popgraph.graph import PopulationGraph, canonical_edges
from popgraph.models import ModelConfig, PhenotypeSchema, PhenotypeSpec, SyntheticCohortConfig, TrainConfig


def _random_graph(n=12, m=5, p=0.3, seed=0):
    rng = np.random.default_rng(seed)
    rows, cols = np.nonzero(np.triu(rng.random((n, n)) < p, k=1))
    return PopulationGraph(
        rng.normal(size=(n, m)),
        rng.uniform(47.0, 81.0, size=n),
        canonical_edges(rows, cols),
        provenance={"method": "test"},
    )


@pytest.fixture
def make_graph():
    """Factory for seeded Bernoulli random graphs with Gaussian features."""
    return _random_graph


@pytest.fixture
def make_cohort():
    """Factory for a cohort from explicit imaging, phenotype and age arrays."""
    def factory(imaging, phenotypes, ages=None, kinds=None):
        imaging = np.asarray(imaging, dtype=float)
        phenotypes = np.asarray(phenotypes, dtype=float)
        n = imaging.shape[0]
        kinds = kinds or ["categorical"] * phenotypes.shape[1]
        schema = PhenotypeSchema(
            phenotypes=[PhenotypeSpec(name=f"q{k}", kind=kind) for k, kind in enumerate(kinds)],
            imaging_features=imaging.shape[1],
        )
        ages = np.linspace(50.0, 70.0, n) if ages is None else ages
        return Cohort(imaging, phenotypes, ages, schema)
    return factory


@pytest.fixture(scope="session")
def small_cohort():
    return generate_synthetic(SyntheticCohortConfig(
        num_subjects=60, imaging_features=6, categorical_phenotypes=3, continuous_phenotypes=3, seed=1,
    ))


@pytest.fixture
def tiny_model():
    return ModelConfig(hidden_width=8, fc_width=4, gat_heads=2, cheb_order=3, seed=3)


@pytest.fixture
def quick_train():
    return TrainConfig(epochs=5, learning_rate=0.01, repeats=2)
