import json
from concurrent.futures import Future
from concurrent.futures.process import BrokenProcessPool

import numpy as np
import pytest

from popgraph import benchmark
from popgraph.benchmark import (
    benchmark_matrix, cell_seed, matrix_cells, render_report_text, report_values, run_experiment, write_report,
)
from popgraph.builders import edge_budget
from popgraph.cohort import generate_synthetic
from popgraph.models import (
    BuilderConfig, ExperimentConfig, ModelConfig, ReportConfig, SyntheticCohortConfig, TrainConfig,
)

BUILDERS = ["no-edges", "random", "knn-imaging"]
MODELS = ["mlp", "gcn", "sage"]


@pytest.fixture
def tiny_widths():
    return ModelConfig(hidden_width=8, fc_width=4)


@pytest.fixture
def tiny_report(small_cohort, quick_train, tiny_widths):
    return benchmark_matrix(
        small_cohort, BUILDERS, MODELS, quick_train,
        builder_config=BuilderConfig(k=3, seed=2, fit_to_budget=False), model_config=tiny_widths,
    )


def test_cell_seed_is_stable_and_distinct():
    assert cell_seed(0, "random", "gcn", 0) == cell_seed(0, "random", "gcn", 0)
    seeds = {cell_seed(s, b, m, r) for s in (0, 1) for b in BUILDERS for m in MODELS for r in range(3)}
    assert len(seeds) == 2 * 3 * 3 * 3
    assert all(0 <= s < 2 ** 32 for s in seeds)


def test_matrix_cells():
    default = ReportConfig()
    cells = matrix_cells(default.builders, default.models)
    assert len(cells) == 25
    assert cells[0] == ("no-edges", "mlp")
    assert ("no-edges", "gcn") not in cells and ("random", "mlp") not in cells
    assert matrix_cells(["random"], ["gat"]) == [("random", "gat")]


def test_matrix_rows_in_cell_order(tiny_report):
    assert [(r.builder, r.model) for r in tiny_report.rows] == matrix_cells(BUILDERS, MODELS)
    for row in tiny_report.rows:
        assert row.error is None
        assert len(row.maes) == 2 and len(row.seeds) == 2
        assert row.mae_mean == pytest.approx(np.mean(row.maes))


def test_homophily_is_shared_by_every_model_of_a_graph(tiny_report):
    for builder in BUILDERS:
        rows = [r for r in tiny_report.rows if r.builder == builder]
        assert len({r.homophily for r in rows}) == 1
        assert len({r.edge_count for r in rows}) == 1
        assert rows[0].homophily == tiny_report.graphs[builder].ratio
    assert tiny_report.graphs["no-edges"].ratio is None


def test_single_cell(small_cohort, quick_train, tiny_widths):
    report = benchmark_matrix(small_cohort, ["random"], ["gat"], quick_train, model_config=tiny_widths)
    assert len(report.rows) == 1
    assert report.rows[0].mae_mean is not None


def test_failed_graph_is_recorded_per_cell(small_cohort, quick_train, tiny_widths):
    report = benchmark_matrix(
        small_cohort, ["knn-imaging", "random"], ["gcn"], quick_train,
        builder_config=BuilderConfig(k=60), model_config=tiny_widths,
    )
    failed, ok = report.rows
    assert failed.builder == "knn-imaging" and "ConfigError" in failed.error
    assert failed.mae_mean is None
    assert ok.error is None and ok.mae_mean is not None
    assert "Failed cells" in render_report_text(report)


def test_unexpected_cell_error_is_recorded(monkeypatch, small_cohort, quick_train, tiny_widths):
    real_train = benchmark.train

    def crashing_train(config, *args, **kwargs):
        if config.architecture == "sage":
            raise RuntimeError("out of memory")
        return real_train(config, *args, **kwargs)

    monkeypatch.setattr("popgraph.benchmark.train", crashing_train)
    report = benchmark_matrix(small_cohort, ["random"], ["gcn", "sage"], quick_train, model_config=tiny_widths)
    ok, failed = report.rows
    assert failed.error == "RuntimeError: out of memory"
    assert failed.mae_mean is None and failed.edge_count == ok.edge_count
    assert ok.error is None and ok.mae_mean is not None


class _InlinePool:
    """Executor stand-in whose workers die for sage cells."""

    def __init__(self, max_workers):
        self.max_workers = max_workers

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        return False

    def submit(self, fn, job):
        future = Future()
        if job.model == "sage":
            future.set_exception(BrokenProcessPool("worker exited"))
        else:
            future.set_result(fn(job))
        return future


def test_dead_worker_is_recorded_per_cell(monkeypatch, small_cohort, quick_train, tiny_widths):
    monkeypatch.setattr("popgraph.benchmark.ProcessPoolExecutor", _InlinePool)
    report = benchmark_matrix(
        small_cohort, ["random", "knn-imaging"], ["gcn", "sage"], quick_train, model_config=tiny_widths, workers=2,
    )
    assert [(r.builder, r.model) for r in report.rows] == matrix_cells(["random", "knn-imaging"], ["gcn", "sage"])
    for row in report.rows:
        if row.model == "sage":
            assert row.error == "BrokenProcessPool: worker exited"
            assert row.homophily == report.graphs[row.builder].ratio
        else:
            assert row.error is None and row.mae_mean is not None


def test_report_text_marks_best_graph(tiny_report):
    text = render_report_text(tiny_report)
    assert "Test MAE (years)" in text and "Test R²" in text
    assert " *" in text
    assert "Wall time" not in text
    assert "Wall time" in render_report_text(tiny_report, include_timing=True)


def test_report_files_are_deterministic(tmp_path, small_cohort, quick_train, tiny_widths):
    def run(directory):
        report = benchmark_matrix(small_cohort, BUILDERS, MODELS, quick_train, model_config=tiny_widths)
        return write_report(report, tmp_path / directory)

    first_text, first_json = run("a")
    second_text, second_json = run("b")
    assert first_text.read_bytes() == second_text.read_bytes()
    assert first_json.read_bytes() == second_json.read_bytes()
    assert "wall_time" not in first_json.read_text()
    assert all("wall_time" in row for row in report_values(
        benchmark_matrix(small_cohort, ["random"], ["gcn"], quick_train, model_config=tiny_widths),
        include_timing=True,
    )["rows"])


def test_run_experiment_records_config():
    config = ExperimentConfig(
        cohort=SyntheticCohortConfig(num_subjects=40, imaging_features=4,
                                     categorical_phenotypes=2, continuous_phenotypes=2),
        model=ModelConfig(hidden_width=4, fc_width=2),
        train=TrainConfig(epochs=2, repeats=1),
        report=ReportConfig(builders=["no-edges", "random"], models=["mlp", "gcn"]),
    )
    report = run_experiment(config)
    assert report.config == config.model_dump(mode="json")
    assert [(r.builder, r.model) for r in report.rows] == [("no-edges", "mlp"), ("random", "gcn")]
    assert json.loads(json.dumps(report_values(report)))["config"]["cohort"]["num_subjects"] == 40


@pytest.mark.slow
def test_process_pool_matches_inline(small_cohort, quick_train, tiny_widths):
    inline = benchmark_matrix(small_cohort, BUILDERS, MODELS, quick_train, model_config=tiny_widths)
    pooled = benchmark_matrix(small_cohort, BUILDERS, MODELS, quick_train, model_config=tiny_widths, workers=2)
    assert report_values(inline) == report_values(pooled)


@pytest.mark.slow
def test_default_matrix_completes(tmp_path):
    config = ExperimentConfig()
    assert config.cohort.num_subjects == 1000
    report = run_experiment(config)
    assert len(report.rows) == 25
    assert all(r.error is None for r in report.rows)
    assert all(len(r.maes) == 3 for r in report.rows)
    lo, hi = edge_budget(config.builder, 1000)
    assert all(lo <= graph.edge_count <= hi for name, graph in report.graphs.items() if name != "no-edges")
    text_path, _ = write_report(report, tmp_path)
    assert text_path.read_text().count("\n") > 20


@pytest.mark.slow
def test_imaging_knn_graph_helps_gcn_more_than_sage():
    cohort = generate_synthetic(SyntheticCohortConfig(num_subjects=1000, snr=5.0, seed=0))
    report = benchmark_matrix(cohort, ["random", "knn-imaging"], ["gcn", "sage"], TrainConfig(repeats=3))
    assert all(len(row.seeds) == 3 for row in report.rows)

    def gap(model):
        return report.row("random", model).mae_mean - report.row("knn-imaging", model).mae_mean

    assert gap("gcn") > 0
    assert abs(gap("sage")) < gap("gcn")
