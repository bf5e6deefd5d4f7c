"""
Command-line interface.

Subcommands: ``generate``, ``build-graph``, ``train``, ``benchmark``,
``export`` and ``layout``. Every subcommand accepts ``--config`` (INI file),
repeatable ``--set section.key=value`` overrides and ``--seed``; each run
prints the resolved configuration and seed before doing any work.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical failure.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional

from popgraph.benchmark import run_experiment, write_report
from popgraph.builders import BUILDERS, build_graph
from popgraph.checkpoint import save_checkpoint
from popgraph.cohort import (
    Cohort, generate_synthetic, load_cohort, load_schema, normalize, split, write_cohort, write_schema,
)
from popgraph.config import load_experiment_config, with_seed
from popgraph.errors import PopGraphError
from popgraph.export import EXPORT_FORMATS, export_graph, layout, write_coordinates
from popgraph.graph import load_graph, save_graph
from popgraph.metrics import homophily_report
from popgraph.models import ExperimentConfig
from popgraph.structured_logging import StructuredLogger, run_id_for
from popgraph.training import evaluate, label_stats, predict, train, write_predictions

logger = logging.getLogger("popgraph")

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


class ArgumentParser(argparse.ArgumentParser):
    """argparse parser whose usage errors exit with status 1."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _schema_path(cohort_path: Path) -> Path:
    return cohort_path.with_name(f"{cohort_path.stem}.schema.ini")


def _load_cohort(args: argparse.Namespace) -> Cohort:
    cohort_path = Path(args.cohort)
    schema = load_schema(args.schema or _schema_path(cohort_path))
    return normalize(load_cohort(cohort_path, schema))


def _dump(document: Dict) -> None:
    print(json.dumps(document, indent=2, sort_keys=True))


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_generate(args: argparse.Namespace, config: ExperimentConfig) -> None:
    out = Path(args.out)
    cohort = generate_synthetic(config.cohort)
    write_cohort(cohort, out)
    write_schema(cohort.schema, _schema_path(out))
    logger.info(f"[CLI] Wrote {cohort!r} to {out}")


def cmd_build_graph(args: argparse.Namespace, config: ExperimentConfig) -> None:
    cohort = _load_cohort(args)
    graph = build_graph(cohort, config.builder)
    save_graph(graph, args.out)
    _dump({"graph": args.out, "provenance": graph.provenance, **homophily_report(graph).model_dump()})


def cmd_train(args: argparse.Namespace, config: ExperimentConfig) -> None:
    graph = load_graph(args.graph)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    node_split = split(graph.num_nodes, config.train.split_fractions, seed=config.train.seed)
    params, history = train(config.model, graph, node_split, config.train, logger=logger)
    stats = label_stats(graph.labels, node_split.train)
    metrics = {
        name: evaluate(params, config.model, graph, index, stats).model_dump()
        for name, index in (("train", node_split.train), ("val", node_split.val), ("test", node_split.test))
    }

    save_checkpoint(out_dir / "checkpoint.json", params, {
        "model": config.model.model_dump(mode="json"),
        "label_stats": stats.model_dump(),
        "best_epoch": history.best_epoch,
    })
    write_predictions(out_dir / "predictions.csv", graph, node_split, predict(params, config.model, graph, stats))
    with open(out_dir / "metrics.json", "w", encoding="utf-8", newline="\n") as f:
        json.dump({"metrics": metrics, "history": history.model_dump()}, f, indent=2, sort_keys=True)
        f.write("\n")
    _dump({"best_epoch": history.best_epoch, "metrics": metrics})


def cmd_benchmark(args: argparse.Namespace, config: ExperimentConfig) -> None:
    cohort = _load_cohort(args) if args.cohort else None
    report = run_experiment(config, cohort, json_logs=args.json_logs)
    output_dir = args.out_dir or config.report.output_dir
    text_path, _ = write_report(report, output_dir, config.report.include_timing)
    print(text_path.read_text(encoding="utf-8"))


def cmd_export(args: argparse.Namespace, config: ExperimentConfig) -> None:
    graph = load_graph(args.graph)
    export_graph(graph, args.out, args.format, include_labels=not args.no_labels)


def cmd_layout(args: argparse.Namespace, config: ExperimentConfig) -> None:
    graph = load_graph(args.graph)
    write_coordinates(args.out, layout(graph, args.iterations, seed=config.train.seed))


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config file with [cohort] [builder] [model] [train] [report]")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="Override one config value (repeatable)")
    common.add_argument("--seed", type=int, help="Seed applied to cohort, builder, model and training")
    common.add_argument("--verbose", action="store_true", help="Debug logging")
    common.add_argument("--json-logs", action="store_true", help="Emit structured logs as JSON")

    parser = ArgumentParser(prog="popgraph", description="Population-graph GNN benchmark for brain-age regression")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=ArgumentParser)

    p = sub.add_parser("generate", parents=[common], help="Write a synthetic cohort CSV and schema")
    p.add_argument("--out", default="cohort.csv")
    p.set_defaults(handler=cmd_generate)

    p = sub.add_parser("build-graph", parents=[common], help="Build a population graph from a cohort")
    p.add_argument("--cohort", required=True, help="Cohort CSV")
    p.add_argument("--schema", help="Schema sidecar (default <cohort>.schema.ini)")
    p.add_argument("--method", choices=BUILDERS.names(), help="Shortcut for --set builder.method=...")
    p.add_argument("--out", default="graph.json")
    p.set_defaults(handler=cmd_build_graph)

    p = sub.add_parser("train", parents=[common], help="Train one model on a graph file")
    p.add_argument("--graph", required=True)
    p.add_argument("--architecture", help="Shortcut for --set model.architecture=...")
    p.add_argument("--out-dir", default="run")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("benchmark", parents=[common], help="Run the builder x model matrix")
    p.add_argument("--cohort", help="Cohort CSV (default: synthetic cohort from [cohort])")
    p.add_argument("--schema")
    p.add_argument("--out-dir", help="Overrides report.output_dir")
    p.set_defaults(handler=cmd_benchmark)

    p = sub.add_parser("export", parents=[common], help="Export a graph for visualization")
    p.add_argument("--graph", required=True)
    p.add_argument("--format", choices=EXPORT_FORMATS, default="graphml")
    p.add_argument("--out", required=True)
    p.add_argument("--no-labels", action="store_true", help="Omit node ages")
    p.set_defaults(handler=cmd_export)

    p = sub.add_parser("layout", parents=[common], help="Force-directed node coordinates")
    p.add_argument("--graph", required=True)
    p.add_argument("--iterations", type=int, default=50)
    p.add_argument("--out", default="coordinates.csv")
    p.set_defaults(handler=cmd_layout)

    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    overrides: List[str] = list(args.overrides)
    if getattr(args, "method", None):
        overrides.append(f"builder.method={args.method}")
    if getattr(args, "architecture", None):
        overrides.append(f"model.architecture={args.architecture}")
    config = load_experiment_config(args.config, overrides)
    if args.seed is not None:
        config = with_seed(config, args.seed)
    return config


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format=LOG_FORMAT,
        stream=sys.stderr,
    )
    handler: Callable[[argparse.Namespace, ExperimentConfig], None] = args.handler
    try:
        config = resolve_config(args)
        resolved = config.model_dump(mode="json")
        run_log = StructuredLogger("popgraph.cli", {"command": args.command},
                                   enable_json=args.json_logs, run_id=run_id_for(resolved))
        _dump({"command": args.command, "seed": config.train.seed, "config": resolved})
        run_log.info("[CLI] Starting")
        handler(args, config)
        run_log.info("[CLI] Finished")
        return 0
    except PopGraphError as e:
        logger.error(f"[CLI] {type(e).__name__}: {e}")
        print(f"popgraph: error: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
