import json

import pytest

from popgraph.checkpoint import load_checkpoint
from popgraph.cli import main
from popgraph.export import node_table_path
from popgraph.graph import load_graph

TINY_COHORT = [
    "--set", "cohort.num_subjects=40", "--set", "cohort.imaging_features=4",
    "--set", "cohort.categorical_phenotypes=2", "--set", "cohort.continuous_phenotypes=2",
]
TINY_MODEL = [
    "--set", "model.hidden_width=4", "--set", "model.fc_width=2", "--set", "train.epochs=2",
]


def test_generate_is_reproducible(tmp_path, capsys):
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["generate", "--out", str(first), "--seed", "5"] + TINY_COHORT) == 0
    assert main(["generate", "--out", str(second), "--seed", "5"] + TINY_COHORT) == 0
    assert first.read_bytes() == second.read_bytes()
    assert (tmp_path / "a.schema.ini").exists()
    printed = capsys.readouterr().out
    assert '"seed": 5' in printed


def test_missing_required_flag(capsys):
    assert main(["build-graph"]) == 1
    assert "--cohort" in capsys.readouterr().err


def test_unknown_subcommand(capsys):
    assert main(["visualize"]) == 1


def test_bad_override_names_the_field(tmp_path, capsys):
    code = main(["generate", "--out", str(tmp_path / "c.csv"), "--set", "cohort.num_subjects=lots"])
    assert code == 1
    assert "cohort.num_subjects" in capsys.readouterr().err


def test_bad_config_file(tmp_path, capsys):
    config = tmp_path / "bad.ini"
    config.write_text("[bogus]\nkey = 1\n")
    assert main(["generate", "--config", str(config), "--out", str(tmp_path / "c.csv")]) == 1
    assert "bogus" in capsys.readouterr().err


def test_missing_cohort_file_is_a_data_error(tmp_path):
    assert main(["build-graph", "--cohort", str(tmp_path / "absent.csv")]) == 2


def test_end_to_end(tmp_path, capsys):
    cohort = tmp_path / "cohort.csv"
    graph = tmp_path / "graph.json"
    run = tmp_path / "run"
    assert main(["generate", "--out", str(cohort)] + TINY_COHORT) == 0
    assert main(["build-graph", "--cohort", str(cohort), "--method", "knn-imaging",
                 "--set", "builder.k=3", "--set", "builder.fit_to_budget=false", "--out", str(graph)]) == 0
    assert load_graph(graph).provenance == {"method": "knn-imaging", "k": 3}

    assert main(["train", "--graph", str(graph), "--architecture", "sage", "--out-dir", str(run)] + TINY_MODEL) == 0
    params, metadata = load_checkpoint(run / "checkpoint.json")
    assert metadata["model"]["architecture"] == "sage"
    assert "conv.weight_neigh" in params
    assert (run / "predictions.csv").read_text().startswith("node,split,age,predicted_age,brain_age_gap\n")
    metrics = json.loads((run / "metrics.json").read_text())
    assert set(metrics["metrics"]) == {"train", "val", "test"}

    assert main(["export", "--graph", str(graph), "--format", "dot", "--out", str(tmp_path / "g.dot")]) == 0
    assert (tmp_path / "g.dot").read_text().startswith("graph population {")
    assert main(["layout", "--graph", str(graph), "--out", str(tmp_path / "xy.csv")]) == 0
    assert len((tmp_path / "xy.csv").read_text().splitlines()) == 41


def test_benchmark_command(tmp_path, capsys):
    code = main(
        ["benchmark", "--out-dir", str(tmp_path / "report"),
         "--set", "report.builders=no-edges,random", "--set", "report.models=mlp,gcn",
         "--set", "train.repeats=1"] + TINY_COHORT + TINY_MODEL
    )
    assert code == 0
    assert (tmp_path / "report" / "report.json").exists()
    assert "Test MAE (years)" in capsys.readouterr().out


@pytest.mark.parametrize("fmt", ["edge-csv", "graphml"])
def test_export_formats(tmp_path, fmt):
    cohort = tmp_path / "cohort.csv"
    graph = tmp_path / "graph.json"
    assert main(["generate", "--out", str(cohort)] + TINY_COHORT) == 0
    assert main(["build-graph", "--cohort", str(cohort), "--method", "random", "--out", str(graph)]) == 0
    out = tmp_path / f"graph.{fmt}"
    assert main(["export", "--graph", str(graph), "--format", fmt, "--out", str(out)]) == 0
    assert out.exists()


def test_build_graph_fits_budget_by_default(tmp_path):
    cohort = tmp_path / "cohort.csv"
    graph = tmp_path / "graph.json"
    assert main(["generate", "--out", str(cohort)] + TINY_COHORT) == 0
    assert main(["build-graph", "--cohort", str(cohort), "--method", "knn-imaging", "--out", str(graph)]) == 0
    built = load_graph(graph)
    assert built.provenance["budget"] == 2
    assert built.num_edges == 2


def test_repeated_commands_write_identical_bytes(tmp_path):
    cohort = tmp_path / "cohort.csv"
    graph = tmp_path / "graph.json"
    run = tmp_path / "run"
    report = tmp_path / "report"
    assert main(["generate", "--out", str(cohort)] + TINY_COHORT) == 0

    commands = [
        (["build-graph", "--cohort", str(cohort), "--method", "parisot", "--out", str(graph)], [graph]),
        (["train", "--graph", str(graph), "--architecture", "gat", "--out-dir", str(run)] + TINY_MODEL,
         [run / "checkpoint.json", run / "metrics.json", run / "predictions.csv"]),
        (["export", "--graph", str(graph), "--format", "edge-csv", "--out", str(tmp_path / "g.csv")],
         [tmp_path / "g.csv", node_table_path(tmp_path / "g.csv")]),
        (["export", "--graph", str(graph), "--format", "graphml", "--out", str(tmp_path / "g.graphml")],
         [tmp_path / "g.graphml"]),
        (["export", "--graph", str(graph), "--format", "dot", "--out", str(tmp_path / "g.dot")],
         [tmp_path / "g.dot"]),
        (["layout", "--graph", str(graph), "--iterations", "30", "--out", str(tmp_path / "xy.csv")],
         [tmp_path / "xy.csv"]),
        (["benchmark", "--out-dir", str(report),
          "--set", "report.builders=no-edges,parisot", "--set", "report.models=mlp,sage",
          "--set", "train.repeats=2"] + TINY_COHORT + TINY_MODEL,
         [report / "report.txt", report / "report.json"]),
    ]
    for argv, outputs in commands:
        assert main(argv) == 0
        first = [path.read_bytes() for path in outputs]
        assert main(argv) == 0
        assert [path.read_bytes() for path in outputs] == first, argv[0]
