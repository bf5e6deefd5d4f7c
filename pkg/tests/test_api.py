import pytest
from fastapi.testclient import TestClient

from api import app

TINY_COHORT = {"num_subjects": 40, "imaging_features": 4, "categorical_phenotypes": 2, "continuous_phenotypes": 2}


@pytest.fixture
def client():
    with TestClient(app) as test_client:
        yield test_client


def test_health(client):
    response = client.get("/health")
    assert response.status_code == 200
    body = response.json()
    assert body["status"] == "healthy"
    assert "knn-imaging" in body["builders"]
    assert body["architectures"] == ["mlp", "gcn", "sage", "gat", "cheb"]


def test_build_graph(client):
    builder = {"method": "knn-all", "k": 2, "fit_to_budget": False}
    response = client.post("/graphs", json={"cohort": TINY_COHORT, "builder": builder})
    assert response.status_code == 200
    body = response.json()
    assert body["provenance"] == {"method": "knn-all", "k": 2}
    assert body["report"]["edge_count"] >= 40
    assert 0.0 <= body["report"]["ratio"] <= 1.0


def test_graph_config_error_is_400(client):
    response = client.post("/graphs", json={"cohort": TINY_COHORT, "builder": {"method": "knn-imaging", "k": 40}})
    assert response.status_code == 400
    assert "ConfigError" in response.json()["detail"]


def test_invalid_body_is_422(client):
    response = client.post("/graphs", json={"builder": {"method": "spectral"}})
    assert response.status_code == 422


def test_benchmark(client):
    response = client.post("/benchmark", json={
        "cohort": TINY_COHORT,
        "model": {"hidden_width": 4, "fc_width": 2},
        "train": {"epochs": 2, "repeats": 1},
        "report": {"builders": ["no-edges", "knn-imaging"], "models": ["mlp", "gat"]},
    })
    assert response.status_code == 200
    rows = response.json()["rows"]
    assert [(r["builder"], r["model"]) for r in rows] == [("no-edges", "mlp"), ("knn-imaging", "gat")]
    assert all("wall_time" not in r for r in rows)
