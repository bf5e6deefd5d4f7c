"""
Transductive training, best-model selection and evaluation.

All nodes take part in message passing every epoch; only the training
indices contribute to the loss. Ages are standardized with train-set
statistics for optimization and mapped back to years for every reported
metric.
"""

import logging
import math
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

import numpy as np
import pandas as pd

from popgraph.autodiff import Trace, backward, gather_rows, mae_loss, mse_loss, no_trace, parameter
from popgraph.cohort import Split
from popgraph.errors import ConfigError, DataError, NumericalError
from popgraph.gnn import ModelParams, forward, init_params, prepare_operators
from popgraph.graph import PopulationGraph
from popgraph.models import EpochRecord, EvaluationResult, LabelStats, ModelConfig, TrainConfig, TrainHistory
from popgraph.optim import AdamW

_LOSSES = {"mse": mse_loss, "mae": mae_loss}


def label_stats(labels: np.ndarray, train_index: np.ndarray) -> LabelStats:
    """Mean and population std of the training labels (std 1 when constant)."""
    y = np.asarray(labels, dtype=np.float64)[np.asarray(train_index, dtype=np.int64)]
    if y.size == 0:
        raise ConfigError("cannot standardize labels over an empty training set")
    std = float(y.std())
    return LabelStats(mean=float(y.mean()), std=std if std > 0 else 1.0)


def regression_metrics(predicted: np.ndarray, actual: np.ndarray) -> EvaluationResult:
    """
    MAE, R² and mean brain-age gap (predicted - actual), all in label units.

    R² is None when ``actual`` is constant.

    Raises:
        DataError: If the inputs are empty or differ in length
    """
    predicted = np.asarray(predicted, dtype=np.float64).reshape(-1)
    actual = np.asarray(actual, dtype=np.float64).reshape(-1)
    if predicted.size == 0 or predicted.shape != actual.shape:
        raise DataError(f"cannot score {predicted.size} predictions against {actual.size} labels")
    residual = predicted - actual
    ss_tot = float(np.sum((actual - actual.mean()) ** 2))
    r2 = None if ss_tot == 0.0 else 1.0 - float(np.sum(residual ** 2)) / ss_tot
    return EvaluationResult(
        mae=float(np.mean(np.abs(residual))),
        r2=r2,
        brain_age_gap=float(np.mean(residual)),
        count=int(predicted.size),
    )


def _check_split(graph: PopulationGraph, split: Split) -> None:
    n = graph.num_nodes
    for name, index in (("train", split.train), ("val", split.val), ("test", split.test)):
        if index.size and (index.min() < 0 or index.max() >= n):
            raise DataError(f"{name} indices fall outside the {n} graph nodes")
    if split.train.size == 0 or split.val.size == 0:
        raise ConfigError("training needs non-empty train and validation sets")


def predict(
    params: Mapping[str, np.ndarray],
    model_config: ModelConfig,
    graph: PopulationGraph,
    stats: LabelStats,
    operators: Optional[Any] = None,
) -> np.ndarray:
    """Predicted ages in years for every node."""
    with no_trace():
        out = forward(model_config, params, graph, operators)
    return out.values * stats.std + stats.mean


def evaluate(
    params: Mapping[str, np.ndarray],
    model_config: ModelConfig,
    graph: PopulationGraph,
    index: np.ndarray,
    stats: LabelStats,
    operators: Optional[Any] = None,
) -> EvaluationResult:
    """Metrics in years over the nodes of ``index``; other nodes are only used for propagation."""
    index = np.asarray(index, dtype=np.int64)
    predicted = predict(params, model_config, graph, stats, operators)
    return regression_metrics(predicted[index], graph.labels[index])


def train(
    model_config: ModelConfig,
    graph: PopulationGraph,
    split: Split,
    train_config: TrainConfig,
    logger: Optional[logging.Logger] = None,
) -> Tuple[ModelParams, TrainHistory]:
    """
    Full-graph AdamW training with best-on-validation model selection.

    Args:
        model_config: Architecture and seed for initialization
        graph: Population graph (all nodes propagate)
        split: Train / validation / test indices
        train_config: Optimizer, loss and epoch settings
        logger: Optional logger

    Returns:
        Parameters of the epoch with minimal validation MAE (earliest on
        ties) and the per-epoch history

    Raises:
        NumericalError: If the training loss or a gradient becomes non-finite
    """
    log = logger or logging.getLogger(__name__)
    _check_split(graph, split)
    stats = label_stats(graph.labels, split.train)
    standardized = (graph.labels - stats.mean) / stats.std
    train_target = standardized[split.train]
    loss_fn = _LOSSES[train_config.loss]
    operators = prepare_operators(model_config, graph)

    params = {name: parameter(v, name) for name, v in init_params(model_config, graph.num_features).items()}
    optimizer = AdamW(
        learning_rate=train_config.learning_rate,
        beta1=train_config.beta1,
        beta2=train_config.beta2,
        epsilon=train_config.epsilon,
        weight_decay=train_config.weight_decay,
        logger=log,
    )

    history = TrainHistory()
    best: Dict[str, np.ndarray] = {}
    log.info(
        f"[Trainer] {model_config.architecture} on {graph.tag}: {train_config.epochs} epochs, "
        f"train/val/test = {split.sizes}"
    )

    for epoch in range(1, train_config.epochs + 1):
        for p in params.values():
            p.zero_grad()
        with Trace() as trace:
            predictions = forward(model_config, params, graph, operators)
            loss = loss_fn(gather_rows(predictions, split.train), train_target)
        loss_value = float(loss.values)
        if not math.isfinite(loss_value):
            raise NumericalError(
                f"non-finite training loss at epoch {epoch} ({model_config.architecture} on {graph.tag})"
            )
        backward(loss, trace)
        try:
            optimizer.step(params)
        except NumericalError as e:
            raise NumericalError(f"epoch {epoch}: {e}") from e

        values = {name: p.values for name, p in params.items()}
        val_mae = evaluate(values, model_config, graph, split.val, stats, operators).mae
        history.epochs.append(EpochRecord(epoch=epoch, train_loss=loss_value, val_mae=val_mae))
        if val_mae < history.best_val_mae:
            history.best_epoch = epoch
            history.best_val_mae = val_mae
            best = {name: v.copy() for name, v in values.items()}
        log.debug(f"[Trainer] epoch {epoch}: loss={loss_value:.6f} val_mae={val_mae:.4f}")

    log.info(f"[Trainer] best epoch {history.best_epoch} with validation MAE {history.best_val_mae:.4f}")
    return best, history


def write_predictions(
    path: Union[str, Path],
    graph: PopulationGraph,
    split: Split,
    predicted: np.ndarray,
) -> None:
    """Per-node CSV ``node,split,age,predicted_age,brain_age_gap``."""
    frame = pd.DataFrame({
        "node": np.arange(graph.num_nodes),
        "split": split.role_of(graph.num_nodes),
        "age": graph.labels,
        "predicted_age": predicted,
        "brain_age_gap": np.asarray(predicted) - graph.labels,
    })
    try:
        frame.to_csv(path, index=False, float_format="%.6f", lineterminator="\n")
    except OSError as e:
        raise DataError(f"cannot write predictions '{path}': {e}") from e
