"""
GNN architectures for node regression.

Every architecture shares one skeleton: a graph layer of ``hidden_width``
units, a dense layer of ``fc_width`` units and a scalar regression head,
with ReLU after the first two. The ``mlp`` baseline swaps the graph layer
for a dense one. Architectures register in :data:`ARCHITECTURES`; each
declares its graph-layer parameters and the sparse operator it consumes.
"""

import logging
from abc import ABC, abstractmethod
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

import numpy as np

from popgraph.autodiff import (
    SparseMatrix, Tensor, add, add_bias, concat_columns, flatten, gather_rows,
    leaky_relu, matmul, relu, scale, segment_softmax, slice_columns, spmm, tensor,
)
from popgraph.errors import ConfigError
from popgraph.graph import PopulationGraph
from popgraph.models import ModelConfig
from popgraph.operators import attention_pattern, mean_aggregator, normalize_adjacency, scaled_laplacian
from popgraph.registry import Registry

logger = logging.getLogger(__name__)

ModelParams = Dict[str, np.ndarray]
ParamLike = Union[np.ndarray, Tensor]


# ---------------------------------------------------------------------------
# Layers
# ---------------------------------------------------------------------------

def dense_layer(x: Tensor, weight: ParamLike, bias: ParamLike, activation: bool = True) -> Tensor:
    """X·W + b, optionally followed by ReLU."""
    out = add_bias(matmul(x, weight), bias)
    return relu(out) if activation else out


def gcn_layer(x: Tensor, a_hat: SparseMatrix, weight: ParamLike, bias: ParamLike) -> Tensor:
    """ReLU(Â·X·W + b)."""
    return relu(add_bias(spmm(a_hat, matmul(x, weight)), bias))


def sage_layer(
    x: Tensor,
    mean_operator: SparseMatrix,
    weight_self: ParamLike,
    weight_neigh: ParamLike,
    bias: ParamLike,
) -> Tensor:
    """
    ReLU(X·W_self + mean_neighbors(X)·W_neigh + b).

    ``mean_operator`` is the row-normalized adjacency, so isolated nodes get a
    zero neighbor mean.
    """
    neighbors = spmm(mean_operator, x)
    return relu(add_bias(add(matmul(x, weight_self), matmul(neighbors, weight_neigh)), bias))


def gat_attention(
    h: Tensor,
    pattern: SparseMatrix,
    att_src: ParamLike,
    att_dst: ParamLike,
    slope: float = 0.2,
) -> Tensor:
    """
    Attention coefficients α_ij for every entry of ``pattern`` in CSR order.

    e_ij = LeakyReLU(a_dstᵀ h_i + a_srcᵀ h_j), normalized by a softmax over
    the in-edges of each target i.
    """
    n = pattern.shape[0]
    targets = np.repeat(np.arange(n), np.diff(pattern.indptr))
    dst_score = gather_rows(flatten(matmul(h, att_dst)), targets)
    src_score = gather_rows(flatten(matmul(h, att_src)), pattern.indices)
    return segment_softmax(leaky_relu(add(dst_score, src_score), slope), targets, n)


def gat_layer(
    x: Tensor,
    pattern: SparseMatrix,
    weight: ParamLike,
    att_src: List[ParamLike],
    att_dst: List[ParamLike],
    bias: ParamLike,
    slope: float = 0.2,
) -> Tensor:
    """
    ReLU(concat_h Σ_j α^h_ij W^h x_j + b) over the self-looped pattern.

    Heads split the output width into equal blocks.
    """
    heads = len(att_src)
    h = matmul(x, weight)
    width = h.shape[1] // heads
    outputs = []
    for head in range(heads):
        block = h if heads == 1 else slice_columns(h, head * width, (head + 1) * width)
        alpha = gat_attention(block, pattern, att_src[head], att_dst[head], slope)
        outputs.append(spmm(pattern, block, values=alpha))
    out = outputs[0] if heads == 1 else concat_columns(*outputs)
    return relu(add_bias(out, bias))


def cheb_layer(x: Tensor, l_tilde: SparseMatrix, weights: List[ParamLike], bias: ParamLike) -> Tensor:
    """
    ReLU(Σ_k T_k(L̃)·X·W_k + b) with the recursion T_k = 2 L̃ T_{k-1} - T_{k-2}
    evaluated on X by repeated sparse products.
    """
    if not weights:
        raise ConfigError("cheb_layer needs at least one weight matrix")
    t_prev = x
    acc = matmul(t_prev, weights[0])
    if len(weights) == 1:
        return relu(add_bias(acc, bias))
    t_curr = spmm(l_tilde, x)
    acc = add(acc, matmul(t_curr, weights[1]))
    for w in weights[2:]:
        t_next = add(scale(spmm(l_tilde, t_curr), 2.0), scale(t_prev, -1.0))
        acc = add(acc, matmul(t_next, w))
        t_prev, t_curr = t_curr, t_next
    return relu(add_bias(acc, bias))


# ---------------------------------------------------------------------------
# Architectures
# ---------------------------------------------------------------------------

class Architecture(ABC):
    """Graph layer of one architecture."""

    name: str = ""

    def conv_shapes(self, config: ModelConfig, in_features: int) -> Dict[str, Tuple[int, ...]]:
        return {
            "conv.weight": (in_features, config.hidden_width),
            "conv.bias": (config.hidden_width,),
        }

    def prepare(self, graph: PopulationGraph) -> Any:
        return None

    @abstractmethod
    def conv(self, config: ModelConfig, params: Mapping[str, Tensor], x: Tensor, operators: Any) -> Tensor:
        ...


ARCHITECTURES: Registry[Architecture] = Registry("architecture")


def architecture(cls):
    """Class decorator registering one instance under ``cls.name``."""
    ARCHITECTURES.register(cls.name, cls(), {"description": (cls.__doc__ or "").strip()})
    return cls


@architecture
class MLP(Architecture):
    """Dense layer in place of the graph layer; ignores edges."""
    name = "mlp"

    def conv(self, config, params, x, operators):
        return dense_layer(x, params["conv.weight"], params["conv.bias"])


@architecture
class GCN(Architecture):
    """Renormalized-adjacency convolution."""
    name = "gcn"

    def prepare(self, graph):
        return normalize_adjacency(graph)

    def conv(self, config, params, x, operators):
        return gcn_layer(x, operators, params["conv.weight"], params["conv.bias"])


@architecture
class SAGE(Architecture):
    """Mean aggregator with separate self and neighbor weights."""
    name = "sage"

    def conv_shapes(self, config, in_features):
        shapes = super().conv_shapes(config, in_features)
        shapes["conv.weight_neigh"] = (in_features, config.hidden_width)
        return shapes

    def prepare(self, graph):
        return mean_aggregator(graph)

    def conv(self, config, params, x, operators):
        return sage_layer(x, operators, params["conv.weight"], params["conv.weight_neigh"], params["conv.bias"])


@architecture
class GAT(Architecture):
    """Additive attention over self-looped neighborhoods."""
    name = "gat"

    def conv_shapes(self, config, in_features):
        shapes = super().conv_shapes(config, in_features)
        head_width = config.hidden_width // config.gat_heads
        for head in range(config.gat_heads):
            shapes[f"conv.att_src.{head}"] = (head_width, 1)
            shapes[f"conv.att_dst.{head}"] = (head_width, 1)
        return shapes

    def prepare(self, graph):
        return attention_pattern(graph)

    def conv(self, config, params, x, operators):
        heads = range(config.gat_heads)
        return gat_layer(
            x, operators, params["conv.weight"],
            [params[f"conv.att_src.{h}"] for h in heads],
            [params[f"conv.att_dst.{h}"] for h in heads],
            params["conv.bias"], config.leaky_slope,
        )


@architecture
class Chebyshev(Architecture):
    """Chebyshev polynomial filter of the scaled Laplacian."""
    name = "cheb"

    def conv_shapes(self, config, in_features):
        shapes = {f"conv.weight.{k}": (in_features, config.hidden_width) for k in range(config.cheb_order)}
        shapes["conv.bias"] = (config.hidden_width,)
        return shapes

    def prepare(self, graph):
        return scaled_laplacian(graph)

    def conv(self, config, params, x, operators):
        weights = [params[f"conv.weight.{k}"] for k in range(config.cheb_order)]
        return cheb_layer(x, operators, weights, params["conv.bias"])


# ---------------------------------------------------------------------------
# Parameters and forward pass
# ---------------------------------------------------------------------------

def param_shapes(config: ModelConfig, in_features: int) -> Dict[str, Tuple[int, ...]]:
    """Every parameter name and shape of ``config`` for ``in_features`` inputs."""
    shapes = ARCHITECTURES.get(config.architecture).conv_shapes(config, in_features)
    shapes["fc.weight"] = (config.hidden_width, config.fc_width)
    shapes["fc.bias"] = (config.fc_width,)
    shapes["head.weight"] = (config.fc_width, 1)
    shapes["head.bias"] = (1,)
    return shapes


def init_params(config: ModelConfig, in_features: int) -> ModelParams:
    """
    Glorot-uniform weights and zero biases, drawn in declaration order from
    ``default_rng(config.seed)``.
    """
    rng = np.random.default_rng(config.seed)
    params: ModelParams = {}
    for name, shape in param_shapes(config, in_features).items():
        if len(shape) == 1:
            params[name] = np.zeros(shape)
        else:
            limit = np.sqrt(6.0 / (shape[0] + shape[1]))
            params[name] = rng.uniform(-limit, limit, size=shape)
    return params


def check_params(config: ModelConfig, params: Mapping[str, ParamLike], in_features: int) -> None:
    """
    Raises:
        ConfigError: If names or shapes do not match ``config``
    """
    expected = param_shapes(config, in_features)
    missing = sorted(set(expected) - set(params))
    extra = sorted(set(params) - set(expected))
    if missing or extra:
        raise ConfigError(
            f"parameters do not match architecture '{config.architecture}': "
            f"missing {missing}, unexpected {extra}"
        )
    for name, shape in expected.items():
        actual = tuple(np.shape(params[name].values if isinstance(params[name], Tensor) else params[name]))
        if actual != shape:
            raise ConfigError(f"parameter '{name}' has shape {actual}, expected {shape}")


def prepare_operators(config: ModelConfig, graph: PopulationGraph) -> Any:
    """Graph operator of ``config.architecture``, reusable across epochs."""
    return ARCHITECTURES.get(config.architecture).prepare(graph)


def forward(
    config: ModelConfig,
    params: Mapping[str, ParamLike],
    graph: PopulationGraph,
    operators: Optional[Any] = None,
) -> Tensor:
    """
    Predictions for every node of ``graph``.

    Args:
        config: Architecture and widths
        params: Arrays or Tensors by name; Tensors are used as-is so their
            gradients are recorded
        graph: Population graph supplying features and structure
        operators: Output of :func:`prepare_operators`, computed when omitted

    Returns:
        Vector of N predictions (standardized label units)

    Raises:
        ConfigError: If params do not match the architecture
    """
    arch = ARCHITECTURES.get(config.architecture)
    check_params(config, params, graph.num_features)
    if operators is None:
        operators = arch.prepare(graph)
    p = {name: value if isinstance(value, Tensor) else tensor(value) for name, value in params.items()}
    x = tensor(graph.features)
    h = arch.conv(config, p, x, operators)
    h = dense_layer(h, p["fc.weight"], p["fc.bias"])
    out = dense_layer(h, p["head.weight"], p["head.bias"], activation=False)
    return flatten(out)
