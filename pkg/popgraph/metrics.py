"""
Regression homophily and structural statistics of population graphs.
"""

from typing import Optional, Tuple

import numpy as np

from popgraph.errors import DataError
from popgraph.graph import PopulationGraph
from popgraph.models import HomophilyReport


def homophily(graph: PopulationGraph) -> Optional[float]:
    """
    Range-normalized edge agreement of node labels.

    h = (1/|E|) Σ_{(i,j)∈E} (1 - |y_i - y_j| / (y_max - y_min)), with the
    range taken over all labels of the graph.

    Returns:
        The ratio in [0, 1]; None for an empty edge set; 1.0 for constant labels

    Raises:
        DataError: If labels are not finite
    """
    if graph.num_edges == 0:
        return None
    y = graph.labels
    if not np.all(np.isfinite(y)):
        raise DataError("homophily: labels must be finite")
    spread = float(y.max() - y.min())
    if spread == 0.0:
        return 1.0
    diff = np.abs(y[graph.edges[:, 0]] - y[graph.edges[:, 1]])
    return float(np.clip(np.mean(1.0 - diff / spread), 0.0, 1.0))


def degree_stats(graph: PopulationGraph) -> Tuple[float, int, int, int]:
    """(mean, min, max) undirected degree and the number of isolated nodes."""
    deg = graph.degrees()
    if deg.size == 0:
        return 0.0, 0, 0, 0
    return float(deg.mean()), int(deg.min()), int(deg.max()), int(np.sum(deg == 0))


def homophily_report(graph: PopulationGraph) -> HomophilyReport:
    mean_deg, min_deg, max_deg, isolated = degree_stats(graph)
    return HomophilyReport(
        provenance=graph.tag,
        ratio=homophily(graph),
        edge_count=graph.num_edges,
        mean_degree=mean_deg,
        min_degree=min_deg,
        max_degree=max_deg,
        isolated_nodes=isolated,
    )
