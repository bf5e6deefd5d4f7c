"""
Population-graph construction methods.

Seven methods are registered in :data:`BUILDERS`: no edges, Erdős–Rényi
random, clinical similarity (phenotype match count ≥ μ), Parisot-style
weighted similarity (cosine × phenotype agreement, top-B pairs), and cosine
kNN over imaging, non-imaging or all features. Sparse builders share an
edge budget, expressed for a reference cohort size and rescaled with the
number of node pairs.
"""

import logging
from functools import partial
from typing import Any, Callable, Dict, Iterator, Optional, Tuple

import networkx as nx
import numpy as np
from sklearn.metrics.pairwise import cosine_similarity as pairwise_cosine

from popgraph.abstracts import GraphBuilder
from popgraph.cohort import Cohort
from popgraph.errors import ConfigError, ShapeError
from popgraph.graph import PopulationGraph, canonical_edges
from popgraph.models import BuilderConfig, PhenotypeSchema
from popgraph.registry import Registry

logger = logging.getLogger(__name__)

BUILDERS: Registry[GraphBuilder] = Registry("graph builder")

BLOCK_ROWS = 512


# ---------------------------------------------------------------------------
# Budget
# ---------------------------------------------------------------------------

def edge_budget(config: BuilderConfig, num_nodes: int) -> Tuple[float, float]:
    """
    Undirected edge budget for a cohort of ``num_nodes`` subjects.

    The configured range applies at ``reference_size``; other sizes scale it
    by n(n-1) / (N0(N0-1)).
    """
    lo, hi = float(config.edge_budget_min), float(config.edge_budget_max)
    if config.scale_budget and num_nodes != config.reference_size:
        factor = (num_nodes * (num_nodes - 1)) / (config.reference_size * (config.reference_size - 1))
        lo, hi = lo * factor, hi * factor
    return lo, hi


def budget_target(config: BuilderConfig, num_nodes: int) -> int:
    """Budget midpoint B, rounded to an edge count."""
    lo, hi = edge_budget(config, num_nodes)
    return int(round((lo + hi) / 2.0))


# ---------------------------------------------------------------------------
# Similarities
# ---------------------------------------------------------------------------

def cosine_similarity(u: np.ndarray, v: np.ndarray) -> float:
    """u·v / (|u||v|); 0 when either vector is zero."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ShapeError(f"cosine_similarity: lengths differ {u.shape} vs {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


def _phenotype_agreement(qa: np.ndarray, qb: np.ndarray, categorical: np.ndarray, theta: float) -> np.ndarray:
    """
    Per-phenotype γ between every row of ``qa`` and every row of ``qb``,
    summed: exact equality for categorical, |difference| ≤ θ for continuous.
    """
    counts = np.zeros((qa.shape[0], qb.shape[0]), dtype=np.int32)
    for k in range(qa.shape[1]):
        diff = qa[:, k][:, None] - qb[:, k][None, :]
        counts += (diff == 0) if categorical[k] else (np.abs(diff) <= theta)
    return counts


def kronecker_sim(
    q_i: np.ndarray,
    q_j: np.ndarray,
    schema: PhenotypeSchema,
    theta: float = 0.1,
) -> Tuple[int, float]:
    """
    Phenotype match count and its normalized similarity count / K.

    Returns:
        (count, count / K)
    """
    q_i = np.asarray(q_i, dtype=np.float64)
    q_j = np.asarray(q_j, dtype=np.float64)
    if q_i.shape != (schema.num_phenotypes,) or q_j.shape != q_i.shape:
        raise ShapeError(f"kronecker_sim: expected vectors of length {schema.num_phenotypes}")
    categorical = np.array(schema.categorical_mask)
    count = int(_phenotype_agreement(q_i[None, :], q_j[None, :], categorical, theta)[0, 0])
    return count, count / schema.num_phenotypes


def parisot_weight(
    x_i: np.ndarray, x_j: np.ndarray,
    q_i: np.ndarray, q_j: np.ndarray,
    schema: PhenotypeSchema, theta: float = 0.1,
) -> float:
    """W(i, j) = cos(x_i, x_j) · Σ_k γ(q_ik, q_jk)."""
    count, _ = kronecker_sim(q_i, q_j, schema, theta)
    return cosine_similarity(x_i, x_j) * count


def _row_blocks(n: int) -> Iterator[slice]:
    for start in range(0, n, BLOCK_ROWS):
        yield slice(start, min(n, start + BLOCK_ROWS))


def _graph(cohort: Cohort, edges: np.ndarray, provenance: Dict[str, Any],
           weights: Optional[np.ndarray] = None) -> PopulationGraph:
    return PopulationGraph(cohort.imaging, cohort.ages, edges, weights, provenance)


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------

@BUILDERS("no-edges", uses=[])
def build_no_edges(cohort: Cohort, config: Optional[BuilderConfig] = None) -> PopulationGraph:
    """N isolated nodes."""
    return _graph(cohort, np.zeros((0, 2), dtype=np.int64), {"method": "no-edges"})


@BUILDERS("random", uses=["seed"])
def build_random_er(cohort: Cohort, config: BuilderConfig) -> PopulationGraph:
    """
    Erdős–Rényi graph with p = 2B / (N(N-1)), B the budget midpoint.

    Raises:
        ConfigError: If the budget exceeds the number of node pairs
    """
    n = cohort.num_subjects
    pairs = n * (n - 1) // 2
    lo, hi = edge_budget(config, n)
    if hi > pairs:
        raise ConfigError(f"edge budget max {hi:.0f} exceeds the {pairs} node pairs of N={n}")
    target = budget_target(config, n)
    p = target / pairs if pairs else 0.0
    g = nx.fast_gnp_random_graph(n, p, seed=config.seed)
    raw = np.array(list(g.edges()), dtype=np.int64).reshape(-1, 2)
    edges = canonical_edges(raw[:, 0], raw[:, 1])
    return _graph(cohort, edges, {"method": "random", "p": p, "budget": target, "seed": config.seed})


def _match_counts(cohort: Cohort, theta: float) -> np.ndarray:
    return _phenotype_agreement(cohort.phenotypes, cohort.phenotypes, cohort.categorical_mask, theta)


def _misses_budget(config: BuilderConfig, num_nodes: int, num_edges: int) -> bool:
    lo, hi = edge_budget(config, num_nodes)
    return config.fit_to_budget and not lo <= num_edges <= hi


def _fit_clinical(counts: np.ndarray, target: int, k_total: int) -> Tuple[np.ndarray, np.ndarray, int, int]:
    """
    Exactly ``target`` pairs (or every pair, if fewer exist): all pairs above
    the boundary match count, then boundary pairs in (i, j) order.

    Returns:
        (rows, cols, boundary match count, pairs admitted at the boundary)
    """
    histogram = np.bincount(counts[counts >= 0], minlength=k_total + 1)
    at_least = np.cumsum(histogram[::-1])[::-1]
    reachable = np.nonzero(at_least >= target)[0]
    boundary = int(reachable.max()) if reachable.size else 0

    above_rows, above_cols = np.nonzero(counts > boundary)
    tie_rows, tie_cols = np.nonzero(counts == boundary)
    take = int(np.clip(target - above_rows.size, 0, tie_rows.size))
    rows = np.concatenate([above_rows, tie_rows[:take]])
    cols = np.concatenate([above_cols, tie_cols[:take]])
    return rows, cols, boundary, take


@BUILDERS("clinical-sim", uses=["mu", "theta", "fit_to_budget"])
def build_clinical_similarity(cohort: Cohort, config: BuilderConfig) -> PopulationGraph:
    """
    Connect i and j iff their phenotype match count is at least μ.

    μ counts matches (equivalently sim ≥ μ/K). When ``fit_to_budget`` is set
    and μ misses the budget, the threshold is lowered or raised to the match
    count at which the budget midpoint is crossed, and pairs at exactly that
    count are admitted in (i, j) order until the midpoint is reached.
    """
    n = cohort.num_subjects
    k_total = cohort.schema.num_phenotypes
    if config.mu > k_total:
        logger.warning(f"[GraphBuilder] mu={config.mu} exceeds K={k_total}; no pair can reach it")
    counts = np.triu(_match_counts(cohort, config.theta), k=1)
    counts[np.tril_indices(n)] = -1

    rows, cols = np.nonzero(counts >= config.mu)
    provenance: Dict[str, Any] = {"method": "clinical-sim", "mu": config.mu, "theta": config.theta}
    if _misses_budget(config, n, rows.size):
        target = budget_target(config, n)
        rows, cols, boundary, take = _fit_clinical(counts, target, k_total)
        provenance.update({"mu": float(boundary), "boundary_pairs": take, "budget": target})
        logger.info(
            f"[GraphBuilder] clinical-sim fitted mu={boundary} ({take} boundary pairs) for budget {target}"
        )
    return _graph(cohort, canonical_edges(rows, cols), provenance)


@BUILDERS("parisot", uses=["theta"])
def build_parisot(cohort: Cohort, config: BuilderConfig) -> PopulationGraph:
    """
    Weighted similarity W(i, j) = cos(x_i, x_j) · Σ_k γ(q_ik, q_jk), keeping the
    top-B pairs with W > 0 (ties by smallest (i, j)); weights are retained.
    """
    n = cohort.num_subjects
    target = budget_target(config, n)
    best_w = np.zeros(0)
    best_i = np.zeros(0, dtype=np.int64)
    best_j = np.zeros(0, dtype=np.int64)

    for block in _row_blocks(n):
        w = pairwise_cosine(cohort.imaging[block], cohort.imaging) * _phenotype_agreement(
            cohort.phenotypes[block], cohort.phenotypes, cohort.categorical_mask, config.theta
        )
        rows, cols = np.nonzero(w > 0)
        rows_global = rows + block.start
        upper = cols > rows_global
        best_w = np.concatenate([best_w, w[rows[upper], cols[upper]]])
        best_i = np.concatenate([best_i, rows_global[upper]])
        best_j = np.concatenate([best_j, cols[upper].astype(np.int64)])
        if best_w.size > target:
            order = np.lexsort((best_j, best_i, -best_w))[:target]
            best_w, best_i, best_j = best_w[order], best_i[order], best_j[order]

    order = np.lexsort((best_j, best_i))
    edges = np.stack([best_i[order], best_j[order]], axis=1).reshape(-1, 2)
    return _graph(
        cohort, edges, {"method": "parisot", "theta": config.theta, "budget": target}, weights=best_w[order],
    )


_KNN_SOURCES = ("imaging", "nonimaging", "all")


def _knn_features(cohort: Cohort, source: str) -> np.ndarray:
    if source == "imaging":
        return cohort.imaging
    if source == "nonimaging":
        return cohort.phenotypes
    if source == "all":
        return np.hstack([cohort.imaging, cohort.phenotypes])
    raise ConfigError(f"unknown kNN source '{source}'; expected one of {_KNN_SOURCES}")


def _neighbor_order(features: np.ndarray, depth: int) -> np.ndarray:
    """For every node, the ``depth`` most cosine-similar other nodes (ties → smaller index)."""
    n = features.shape[0]
    order = np.empty((n, depth), dtype=np.int64)
    for block in _row_blocks(n):
        sim = pairwise_cosine(features[block], features)
        sim[np.arange(block.stop - block.start), np.arange(block.start, block.stop)] = -np.inf
        order[block] = np.argsort(-sim, axis=1, kind="stable")[:, :depth]
    return order


def _knn_edges(order: np.ndarray, k: int) -> np.ndarray:
    n = order.shape[0]
    return canonical_edges(np.repeat(np.arange(n), k), order[:, :k].ravel())


def _fit_knn(features: np.ndarray, target: int) -> Tuple[np.ndarray, int, int]:
    """
    Exactly ``target`` edges (capped at the number of pairs) added in
    neighbour-rank order: every node's first neighbour, then every node's
    second, and so on, nodes by index within a rank.

    Returns:
        (edges, number of complete ranks, edges taken from the next rank)
    """
    n = features.shape[0]
    target = min(target, n * (n - 1) // 2)
    if target <= 0:
        return np.zeros((0, 2), dtype=np.int64), 0, 0

    depth = min(n - 1, 8)
    order = _neighbor_order(features, depth)
    while _knn_edges(order, depth).shape[0] < target and depth < n - 1:
        depth = min(n - 1, 2 * depth)
        order = _neighbor_order(features, depth)

    full = 0
    while full < depth and _knn_edges(order, full + 1).shape[0] <= target:
        full += 1
    base = _knn_edges(order, full)
    if full == depth or base.shape[0] == target:
        return base, full, 0

    src = np.arange(n)
    dst = order[:, full]
    keys = np.minimum(src, dst) * n + np.maximum(src, dst)
    first = np.zeros(n, dtype=bool)
    first[np.unique(keys, return_index=True)[1]] = True
    fresh = np.nonzero(first & ~np.isin(keys, base[:, 0] * n + base[:, 1]))[0][: target - base.shape[0]]
    edges = canonical_edges(np.concatenate([base[:, 0], src[fresh]]), np.concatenate([base[:, 1], dst[fresh]]))
    return edges, full, int(fresh.size)


def build_knn(cohort: Cohort, config: BuilderConfig, source: str = "imaging") -> PopulationGraph:
    """
    Link every node to its k most cosine-similar nodes and symmetrize by union.

    When ``fit_to_budget`` is set and k misses the budget, edges are instead
    added rank by rank until the budget midpoint is reached; the provenance
    records the complete ranks as ``k`` and the partial rank's edges.

    Raises:
        ConfigError: If k ≥ N
    """
    n = cohort.num_subjects
    if config.k >= n:
        raise ConfigError(f"k={config.k} must be smaller than the cohort size N={n}")
    features = _knn_features(cohort, source)

    edges = _knn_edges(_neighbor_order(features, config.k), config.k)
    provenance: Dict[str, Any] = {"method": f"knn-{source}", "k": config.k}
    if _misses_budget(config, n, edges.shape[0]):
        target = budget_target(config, n)
        edges, full, extra = _fit_knn(features, target)
        provenance.update({"k": full, "partial_rank_edges": extra, "budget": target})
        logger.info(f"[GraphBuilder] knn-{source} fitted k={full} (+{extra} edges) for budget {target}")
    return _graph(cohort, edges, provenance)


for _source in _KNN_SOURCES:
    BUILDERS.register(f"knn-{_source}", partial(build_knn, source=_source), {"uses": ["k", "fit_to_budget"]})


def build_graph(cohort: Cohort, config: BuilderConfig) -> PopulationGraph:
    """
    Build the graph named by ``config.method`` and log its size against the budget.
    """
    builder: Callable[[Cohort, BuilderConfig], PopulationGraph] = BUILDERS.get(config.method)
    graph = builder(cohort, config)
    graph.provenance.setdefault("method", config.method)

    if config.method != "no-edges":
        lo, hi = edge_budget(config, cohort.num_subjects)
        status = "within" if lo <= graph.num_edges <= hi else "outside"
        log = logger.info if status == "within" else logger.warning
        log(
            f"[GraphBuilder] {config.method}: {graph.num_edges} edges, {status} budget "
            f"[{lo:.0f}, {hi:.0f}] for N={cohort.num_subjects}"
        )
    return graph
