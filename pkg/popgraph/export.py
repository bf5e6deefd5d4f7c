"""
Graph export for external visualization, plus a force-directed layout.

Nodes carry their ``age`` so that renderers can colour subjects by age.
"""

import logging
from pathlib import Path
from typing import Literal, Optional, Union

import networkx as nx
import numpy as np
import pandas as pd

from popgraph.errors import ConfigError, DataError
from popgraph.graph import PopulationGraph, canonical_edges

logger = logging.getLogger(__name__)

ExportFormat = Literal["edge-csv", "graphml", "dot"]
EXPORT_FORMATS = ("edge-csv", "graphml", "dot")


def to_networkx(graph: PopulationGraph, include_labels: bool = True) -> nx.Graph:
    """Undirected networkx view with nodes 0..N-1 in order."""
    g = nx.Graph()
    if include_labels:
        g.add_nodes_from((i, {"age": float(age)}) for i, age in enumerate(graph.labels))
    else:
        g.add_nodes_from(range(graph.num_nodes))
    if graph.weights is None:
        g.add_edges_from(graph.edges.tolist())
    else:
        g.add_edges_from(
            (int(i), int(j), {"weight": float(w)}) for (i, j), w in zip(graph.edges, graph.weights)
        )
    return g


def node_table_path(path: Union[str, Path]) -> Path:
    """Companion node file of an edge CSV: ``<stem>.nodes.csv``."""
    path = Path(path)
    return path.with_name(f"{path.stem}.nodes.csv")


def _write_edge_csv(graph: PopulationGraph, path: Path, include_labels: bool) -> None:
    pd.DataFrame(graph.edges, columns=["src", "dst"]).to_csv(path, index=False, lineterminator="\n")
    nodes = pd.DataFrame({"node": np.arange(graph.num_nodes)})
    if include_labels:
        nodes["age"] = graph.labels
    nodes.to_csv(node_table_path(path), index=False, float_format="%.17g", lineterminator="\n")


def _write_dot(graph: PopulationGraph, path: Path, include_labels: bool) -> None:
    lines = ["graph population {"]
    for i in range(graph.num_nodes):
        lines.append(f'  {i} [age="{float(graph.labels[i])!r}"];' if include_labels else f"  {i};")
    weights = graph.weights
    for e, (i, j) in enumerate(graph.edges.tolist()):
        lines.append(f'  {i} -- {j} [weight="{float(weights[e])!r}"];' if weights is not None else f"  {i} -- {j};")
    lines.append("}")
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def export_graph(
    graph: PopulationGraph,
    path: Union[str, Path],
    fmt: ExportFormat = "edge-csv",
    include_labels: bool = True,
) -> Path:
    """
    Write ``graph`` as an edge CSV (``src,dst`` plus a ``node,age`` table),
    GraphML or DOT.

    Raises:
        ConfigError: On an unknown format
        DataError: If the path cannot be written
    """
    if fmt not in EXPORT_FORMATS:
        raise ConfigError(f"unknown export format '{fmt}'; expected one of {', '.join(EXPORT_FORMATS)}")
    path = Path(path)
    try:
        if fmt == "edge-csv":
            _write_edge_csv(graph, path, include_labels)
        elif fmt == "graphml":
            nx.write_graphml(to_networkx(graph, include_labels), path)
        else:
            _write_dot(graph, path, include_labels)
    except OSError as e:
        raise DataError(f"cannot write {fmt} export '{path}': {e}") from e
    logger.info(f"[Export] Wrote {graph!r} as {fmt} to {path}")
    return path


def read_edge_csv(path: Union[str, Path], num_nodes: Optional[int] = None) -> np.ndarray:
    """
    Edges of an exported edge CSV in canonical form.

    Raises:
        DataError: On a missing header, non-integer ids or ids ≥ ``num_nodes``
    """
    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataError(f"cannot read edge file '{path}': {e}") from e
    if list(frame.columns) != ["src", "dst"]:
        raise DataError(f"edge file '{path}' must have the header 'src,dst'")
    try:
        src = frame["src"].to_numpy(dtype=np.int64)
        dst = frame["dst"].to_numpy(dtype=np.int64)
    except (TypeError, ValueError) as e:
        raise DataError(f"edge file '{path}' holds non-integer node ids") from e
    if num_nodes is not None and frame.size and max(src.max(), dst.max()) >= num_nodes:
        raise DataError(f"edge file '{path}' references nodes beyond {num_nodes - 1}")
    return canonical_edges(src, dst)


def layout(graph: PopulationGraph, iterations: int = 50, seed: int = 0) -> np.ndarray:
    """
    Fruchterman-Reingold coordinates scaled into the unit square.

    Returns:
        N × 2 array; a single node sits at (0.5, 0.5)
    """
    if graph.num_nodes == 0:
        raise DataError("cannot lay out an empty graph")
    positions = nx.spring_layout(
        to_networkx(graph, include_labels=False), iterations=iterations, threshold=0.0, seed=seed
    )
    coords = np.array([positions[i] for i in range(graph.num_nodes)], dtype=np.float64).reshape(-1, 2)
    lo = coords.min(axis=0)
    extent = float((coords.max(axis=0) - lo).max())
    if extent == 0.0:
        return np.full_like(coords, 0.5)
    return (coords - lo) / extent


def write_coordinates(path: Union[str, Path], coords: np.ndarray) -> None:
    """CSV ``node,x,y``."""
    frame = pd.DataFrame({"node": np.arange(coords.shape[0]), "x": coords[:, 0], "y": coords[:, 1]})
    try:
        frame.to_csv(path, index=False, float_format="%.6f", lineterminator="\n")
    except OSError as e:
        raise DataError(f"cannot write coordinates '{path}': {e}") from e
