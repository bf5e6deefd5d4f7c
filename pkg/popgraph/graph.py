"""
Population graph: subjects as nodes, imaging features as node features,
age as node label, and an undirected edge set stored as sorted unique pairs.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import scipy.sparse as sp

from popgraph.errors import DataError

logger = logging.getLogger(__name__)

GRAPH_FORMAT = "popgraph.graph"


def canonical_edges(rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """
    Turn arbitrary (row, col) pairs into sorted unique (i < j) pairs.

    Self-pairs are dropped.
    """
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    keep = rows != cols
    lo = np.minimum(rows[keep], cols[keep])
    hi = np.maximum(rows[keep], cols[keep])
    if lo.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    return np.unique(np.stack([lo, hi], axis=1), axis=0)


class PopulationGraph:
    """
    Immutable undirected population graph.

    Args:
        features: N × M node features (the cohort imaging features)
        labels: N ages in years
        edges: E × 2 integer pairs with i < j, lexicographically sorted, unique
        weights: Optional E edge weights aligned with ``edges``
        provenance: Builder description (method and effective parameters)
    """

    def __init__(
        self,
        features: np.ndarray,
        labels: np.ndarray,
        edges: Optional[np.ndarray] = None,
        weights: Optional[np.ndarray] = None,
        provenance: Optional[Dict[str, Any]] = None
    ):
        self.features = np.array(features, dtype=np.float64, copy=True)
        self.labels = np.array(labels, dtype=np.float64, copy=True)
        raw = np.zeros((0, 2)) if edges is None else np.asarray(edges)
        self.edges = np.array(raw, dtype=np.int64, copy=True).reshape(-1, 2)
        self.weights = None if weights is None else np.array(weights, dtype=np.float64, copy=True)
        self.provenance: Dict[str, Any] = dict(provenance or {"method": "unknown"})
        self._validate()
        for array in (self.features, self.labels, self.edges, self.weights):
            if array is not None:
                array.flags.writeable = False

    def _validate(self) -> None:
        n = self.labels.shape[0]
        if self.labels.ndim != 1 or self.features.ndim != 2 or self.features.shape[0] != n:
            raise DataError(f"features {self.features.shape} and labels {self.labels.shape} disagree")
        if self.edges.size:
            i, j = self.edges[:, 0], self.edges[:, 1]
            if np.any(i == j):
                raise DataError("population graph contains a self-loop")
            if np.any(i > j):
                raise DataError("population graph edges must be stored as (i, j) with i < j")
            if i.min() < 0 or j.max() >= n:
                raise DataError(f"edge endpoint outside 0..{n - 1}")
            keys = i * n + j
            if np.any(np.diff(keys) <= 0):
                raise DataError("population graph edges must be sorted and unique")
        if self.weights is not None and self.weights.shape != (self.edges.shape[0],):
            raise DataError(f"{self.weights.shape[0]} weights for {self.edges.shape[0]} edges")

    @property
    def num_nodes(self) -> int:
        return int(self.labels.shape[0])

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])

    @property
    def num_features(self) -> int:
        return int(self.features.shape[1])

    @property
    def tag(self) -> str:
        return str(self.provenance.get("method", "unknown"))

    def adjacency(self) -> sp.csr_matrix:
        """Symmetric binary N × N adjacency in canonical CSR form."""
        n = self.num_nodes
        i, j = self.edges[:, 0], self.edges[:, 1]
        w = np.ones(self.num_edges)
        matrix = sp.coo_matrix(
            (np.concatenate([w, w]), (np.concatenate([i, j]), np.concatenate([j, i]))), shape=(n, n)
        ).tocsr()
        matrix.sum_duplicates()
        matrix.sort_indices()
        return matrix

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.reshape(-1), minlength=self.num_nodes)

    def neighbor_lists(self) -> List[List[int]]:
        adj = self.adjacency()
        return [adj.indices[adj.indptr[v]:adj.indptr[v + 1]].tolist() for v in range(self.num_nodes)]

    def with_labels(self, labels: np.ndarray) -> "PopulationGraph":
        return PopulationGraph(self.features, labels, self.edges, self.weights, self.provenance)

    def __repr__(self) -> str:
        return f"<PopulationGraph '{self.tag}' N={self.num_nodes} E={self.num_edges}>"


def graph_to_dict(graph: PopulationGraph) -> Dict[str, Any]:
    return {
        "format": GRAPH_FORMAT,
        "version": 1,
        "provenance": graph.provenance,
        "num_nodes": graph.num_nodes,
        "labels": graph.labels.tolist(),
        "features": graph.features.tolist(),
        "edges": graph.edges.tolist(),
        "weights": None if graph.weights is None else graph.weights.tolist(),
    }


def graph_from_dict(data: Dict[str, Any]) -> PopulationGraph:
    if data.get("format") != GRAPH_FORMAT:
        raise DataError(f"not a population graph document (format={data.get('format')!r})")
    graph = PopulationGraph(
        features=np.asarray(data["features"], dtype=np.float64).reshape(data["num_nodes"], -1),
        labels=np.asarray(data["labels"], dtype=np.float64),
        edges=np.asarray(data["edges"], dtype=np.int64).reshape(-1, 2),
        weights=None if data.get("weights") is None else np.asarray(data["weights"]),
        provenance=data.get("provenance"),
    )
    return graph


def save_graph(graph: PopulationGraph, path: Union[str, Path]) -> None:
    """Write the native JSON graph file."""
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            json.dump(graph_to_dict(graph), f)
    except OSError as e:
        raise DataError(f"cannot write graph file '{path}': {e}") from e
    logger.info(f"[GraphStore] Saved {graph!r} to {path}")


def load_graph(path: Union[str, Path]) -> PopulationGraph:
    """Read a graph written by :func:`save_graph`."""
    try:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise DataError(f"cannot read graph file '{path}': {e}") from e
    try:
        graph = graph_from_dict(data)
    except (KeyError, TypeError, ValueError) as e:
        raise DataError(f"malformed graph file '{path}': {e}") from e
    logger.info(f"[GraphStore] Loaded {graph!r} from {path}")
    return graph
