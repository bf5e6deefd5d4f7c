"""
Sparse propagation operators derived from a population graph.

All operators are canonical CSR matrices built from the binary undirected
adjacency; isolated nodes are handled without division by zero.
"""

import numpy as np
import scipy.sparse as sp

from popgraph.graph import PopulationGraph


def _inverse_sqrt(values: np.ndarray) -> np.ndarray:
    out = np.zeros_like(values, dtype=np.float64)
    positive = values > 0
    out[positive] = 1.0 / np.sqrt(values[positive])
    return out


def _canonical(matrix: sp.spmatrix) -> sp.csr_matrix:
    matrix = sp.csr_matrix(matrix)
    matrix.sum_duplicates()
    matrix.eliminate_zeros()
    matrix.sort_indices()
    return matrix


def normalize_adjacency(graph: PopulationGraph) -> sp.csr_matrix:
    """Renormalized GCN operator Â = D̂^-1/2 (A + I) D̂^-1/2."""
    a_hat = graph.adjacency() + sp.identity(graph.num_nodes, format="csr")
    d = sp.diags(_inverse_sqrt(np.asarray(a_hat.sum(axis=1)).ravel()))
    return _canonical(d @ a_hat @ d)


def scaled_laplacian(graph: PopulationGraph, lambda_max: float = 2.0) -> sp.csr_matrix:
    """
    Chebyshev operator L̃ = (2 / λ_max) L_sym - I with L_sym = I - D^-1/2 A D^-1/2.

    Isolated nodes contribute a zero row to D^-1/2 A D^-1/2, so with the
    default λ_max = 2 the empty graph yields the zero matrix.
    """
    n = graph.num_nodes
    adj = graph.adjacency()
    d = sp.diags(_inverse_sqrt(np.asarray(adj.sum(axis=1)).ravel()))
    identity = sp.identity(n, format="csr")
    l_sym = identity - d @ adj @ d
    return _canonical((2.0 / lambda_max) * l_sym - identity)


def mean_aggregator(graph: PopulationGraph) -> sp.csr_matrix:
    """Row-normalized binary adjacency; rows of isolated nodes are zero."""
    adj = graph.adjacency()
    deg = np.asarray(adj.sum(axis=1)).ravel()
    inv = np.zeros_like(deg)
    inv[deg > 0] = 1.0 / deg[deg > 0]
    return _canonical(sp.diags(inv) @ adj)


def attention_pattern(graph: PopulationGraph) -> sp.csr_matrix:
    """
    Sparsity pattern of A + I for attention: row i lists the sources j of
    edges j → i, self-loop included.
    """
    pattern = graph.adjacency() + sp.identity(graph.num_nodes, format="csr")
    pattern = sp.csr_matrix(pattern)
    pattern.sort_indices()
    pattern.data[:] = 1.0
    return pattern
