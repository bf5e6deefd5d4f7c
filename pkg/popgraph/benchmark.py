"""
Builder × architecture benchmark matrix.

Each graph is built once and its homophily measured once. Every
(builder, architecture) cell then trains ``repeats`` models, one per shared
train/validation/test split, with a seed derived from the global seed and
the cell coordinates. Cells are independent jobs: they may run in a process
pool and their results are accumulated in any order. A failing cell is
recorded in its row and never aborts the others.
"""

import hashlib
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from popgraph.builders import build_graph
from popgraph.cohort import Cohort, Split, generate_synthetic, split
from popgraph.graph import PopulationGraph
from popgraph.metrics import homophily_report
from popgraph.models import (
    BenchmarkReport, BenchmarkRow, BuilderConfig, ExperimentConfig,
    HomophilyReport, ModelConfig, TrainConfig,
)
from popgraph.structured_logging import LoggingContext, StructuredLogger, run_id_for
from popgraph.training import evaluate, label_stats, train

logger = logging.getLogger(__name__)

BASELINE_BUILDER = "no-edges"
BASELINE_MODEL = "mlp"


def cell_seed(seed: int, builder: str, model: str, repeat: int = 0) -> int:
    """Stable 32-bit seed for one repeat of one matrix cell."""
    digest = hashlib.sha256(f"{seed}:{builder}:{model}:{repeat}".encode("utf-8")).hexdigest()
    return int(digest[:8], 16)


def matrix_cells(builders: Sequence[str], models: Sequence[str]) -> List[Tuple[str, str]]:
    """
    Cells of the matrix in report order.

    The edgeless graph is the MLP baseline: ``no-edges`` pairs only with
    ``mlp`` and ``mlp`` only with ``no-edges``.
    """
    cells = []
    for builder in builders:
        for model in models:
            if (builder == BASELINE_BUILDER) == (model == BASELINE_MODEL):
                cells.append((builder, model))
    return cells


@dataclass
class CellJob:
    """Everything one worker needs to run a cell."""
    builder: str
    model: str
    graph: PopulationGraph
    splits: List[Split]
    model_config: ModelConfig
    train_config: TrainConfig
    homophily: Optional[float]


def _mean_std(values: Sequence[float]) -> Tuple[Optional[float], Optional[float]]:
    if not values:
        return None, None
    return float(np.mean(values)), float(np.std(values))


def _failed_row(job: CellJob, error: BaseException) -> BenchmarkRow:
    logger.error(f"[Benchmark] worker for {job.builder} x {job.model} failed: {type(error).__name__}: {error}")
    return BenchmarkRow(
        builder=job.builder, model=job.model, homophily=job.homophily,
        edge_count=job.graph.num_edges, error=f"{type(error).__name__}: {error}",
    )


def run_cell(job: CellJob) -> BenchmarkRow:
    """Train and test every repeat of one cell."""
    started = time.perf_counter()
    row = BenchmarkRow(
        builder=job.builder, model=job.model,
        homophily=job.homophily, edge_count=job.graph.num_edges,
    )
    gaps: List[float] = []
    try:
        for repeat, cell_split in enumerate(job.splits):
            seed = cell_seed(job.train_config.seed, job.builder, job.model, repeat)
            config = job.model_config.model_copy(update={"architecture": job.model, "seed": seed})
            params, history = train(config, job.graph, cell_split, job.train_config)
            stats = label_stats(job.graph.labels, cell_split.train)
            result = evaluate(params, config, job.graph, cell_split.test, stats)
            row.seeds.append(seed)
            row.histories.append(history)
            row.maes.append(result.mae)
            row.r2s.append(result.r2)
            gaps.append(result.brain_age_gap)
    except Exception as e:
        logger.error(f"[Benchmark] cell {job.builder} x {job.model} failed: {type(e).__name__}: {e}")
        row.error = f"{type(e).__name__}: {e}"

    row.mae_mean, row.mae_std = _mean_std(row.maes)
    row.r2_mean, row.r2_std = _mean_std([r for r in row.r2s if r is not None])
    row.gap_mean = float(np.mean(gaps)) if gaps else None
    row.wall_time = time.perf_counter() - started
    return row


def benchmark_matrix(
    cohort: Cohort,
    builders: Sequence[str],
    models: Sequence[str],
    train_config: TrainConfig,
    builder_config: Optional[BuilderConfig] = None,
    model_config: Optional[ModelConfig] = None,
    workers: int = 1,
    logger: Optional[StructuredLogger] = None,
) -> BenchmarkReport:
    """
    Run the builder × architecture matrix on one cohort.

    Args:
        cohort: Normalized cohort
        builders: Builder method names, in report order
        models: Architecture names, in report order
        train_config: Optimizer settings, global seed and repeat count
        builder_config: Shared builder settings; ``method`` is set per builder
        model_config: Shared widths; ``architecture`` and ``seed`` are set per cell
        workers: Process-pool size; 1 runs cells inline
        logger: Optional structured logger

    Returns:
        Report with one row per cell, in (builder, model) order
    """
    log = logger or StructuredLogger(__name__)
    builder_config = builder_config or BuilderConfig()
    model_config = model_config or ModelConfig()

    splits = [
        split(cohort, train_config.split_fractions, seed=train_config.seed + repeat)
        for repeat in range(train_config.repeats)
    ]

    graphs: Dict[str, PopulationGraph] = {}
    reports: Dict[str, HomophilyReport] = {}
    failed: Dict[str, str] = {}
    for builder in dict.fromkeys(builders):
        with LoggingContext(log, builder=builder):
            try:
                graph = build_graph(cohort, builder_config.model_copy(update={"method": builder}))
            except Exception as e:
                log.error(f"[Benchmark] graph construction failed: {type(e).__name__}: {e}")
                failed[builder] = f"{type(e).__name__}: {e}"
                continue
            graphs[builder] = graph
            reports[builder] = homophily_report(graph)
            log.info(
                "[Benchmark] graph built",
                {"edges": graph.num_edges, "homophily": reports[builder].ratio},
            )

    cells = matrix_cells(list(dict.fromkeys(builders)), list(dict.fromkeys(models)))
    rows: List[BenchmarkRow] = []
    jobs: List[CellJob] = []
    for builder, model in cells:
        if builder in failed:
            rows.append(BenchmarkRow(builder=builder, model=model, error=failed[builder]))
            continue
        jobs.append(CellJob(
            builder=builder, model=model, graph=graphs[builder], splits=splits,
            model_config=model_config, train_config=train_config,
            homophily=reports[builder].ratio,
        ))

    log.info(f"[Benchmark] running {len(jobs)} cells with {workers} worker(s)")
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(run_cell, job): job for job in jobs}
            for future in as_completed(futures):
                try:
                    rows.append(future.result())
                except Exception as e:
                    rows.append(_failed_row(futures[future], e))
    else:
        rows.extend(run_cell(job) for job in jobs)

    order = {cell: position for position, cell in enumerate(cells)}
    rows.sort(key=lambda r: order[(r.builder, r.model)])
    for row in rows:
        log.info(
            f"[Benchmark] {row.builder} x {row.model}: MAE {row.mae_mean}",
            {"wall_time": row.wall_time, "error": row.error},
        )
    return BenchmarkReport(rows=rows, graphs=reports)


def run_experiment(
    config: ExperimentConfig,
    cohort: Optional[Cohort] = None,
    json_logs: bool = False,
) -> BenchmarkReport:
    """Benchmark an experiment config on ``cohort`` or on its synthetic cohort."""
    provenance = config.model_dump(mode="json")
    log = StructuredLogger(
        __name__, base_context={"component": "benchmark"},
        enable_json=json_logs, run_id=run_id_for(provenance),
    )
    if cohort is None:
        cohort = generate_synthetic(config.cohort)
    report = benchmark_matrix(
        cohort,
        builders=config.report.builders,
        models=config.report.models,
        train_config=config.train,
        builder_config=config.builder,
        model_config=config.model,
        workers=config.report.workers,
        logger=log,
    )
    report.config = provenance
    return report


# ---------------------------------------------------------------------------
# Report files
# ---------------------------------------------------------------------------

def _fmt(mean: Optional[float], std: Optional[float]) -> str:
    if mean is None:
        return "-"
    return f"{mean:.3f} ± {std:.3f}" if std is not None else f"{mean:.3f}"


def _table(report: BenchmarkReport, title: str, metric: str, best_is_min: bool) -> List[str]:
    builders = list(dict.fromkeys(r.builder for r in report.rows))
    models = list(dict.fromkeys(r.model for r in report.rows))

    best: Dict[str, Optional[float]] = {}
    for model in models:
        scores = [getattr(r, f"{metric}_mean") for r in report.rows if r.model == model]
        scores = [s for s in scores if s is not None]
        best[model] = (min(scores) if best_is_min else max(scores)) if scores else None

    cells: List[List[str]] = [["graph"] + models + ["homophily", "edges"]]
    for builder in builders:
        line = [builder]
        for model in models:
            row = report.row(builder, model)
            if row is None:
                line.append("")
                continue
            mean = getattr(row, f"{metric}_mean")
            text = _fmt(mean, getattr(row, f"{metric}_std"))
            if mean is not None and mean == best[model]:
                text += " *"
            line.append(text)
        graph = report.graphs.get(builder)
        line.append("-" if graph is None or graph.ratio is None else f"{graph.ratio:.4f}")
        line.append("-" if graph is None else str(graph.edge_count))
        cells.append(line)

    widths = [max(len(line[c]) for line in cells) for c in range(len(cells[0]))]
    out = [title, ""]
    for index, line in enumerate(cells):
        out.append("  ".join(text.ljust(width) for text, width in zip(line, widths)).rstrip())
        if index == 0:
            out.append("  ".join("-" * width for width in widths))
    return out


def render_report_text(report: BenchmarkReport, include_timing: bool = False) -> str:
    """Aligned plain-text MAE and R² tables followed by the config provenance."""
    lines = _table(report, "Test MAE (years), mean ± std over repeats; * marks the best graph per model", "mae", True)
    lines += [""]
    lines += _table(report, "Test R², mean ± std over repeats; * marks the best graph per model", "r2", False)

    errors = [r for r in report.rows if r.error]
    if errors:
        lines += ["", "Failed cells"]
        lines += [f"  {r.builder} x {r.model}: {r.error}" for r in errors]
    if include_timing:
        lines += ["", "Wall time (s)"]
        lines += [f"  {r.builder} x {r.model}: {r.wall_time:.2f}" for r in report.rows if r.wall_time is not None]

    lines += ["", "Configuration", json.dumps(report.config, indent=2, sort_keys=True)]
    return "\n".join(lines) + "\n"


def report_values(report: BenchmarkReport, include_timing: bool = False) -> Dict:
    """Machine-readable report content."""
    exclude = None if include_timing else {"rows": {"__all__": {"wall_time"}}}
    return report.model_dump(mode="json", exclude=exclude)


def write_report(
    report: BenchmarkReport,
    output_dir: Union[str, Path],
    include_timing: bool = False,
) -> Tuple[Path, Path]:
    """
    Write ``report.txt`` and ``report.json`` into ``output_dir``.

    Without ``include_timing`` both files depend only on config and seeds.
    """
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    text_path = output_dir / "report.txt"
    json_path = output_dir / "report.json"
    with open(text_path, "w", encoding="utf-8", newline="\n") as f:
        f.write(render_report_text(report, include_timing))
    with open(json_path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(report_values(report, include_timing), f, indent=2, sort_keys=True)
        f.write("\n")
    logger.info(f"[Benchmark] Report written to {text_path} and {json_path}")
    return text_path, json_path
