"""
Reverse-mode automatic differentiation over dense and CSR operands.

Operations executed while a :class:`Trace` is active append a record holding
their operands, their output and a backward rule. :func:`backward` replays
the records in reverse order and accumulates exact gradients into every
tensor that requires one. Outside a trace the same operations simply compute
values, which is how inference and finite-difference checks run.
"""

import contextvars
import itertools
from contextlib import contextmanager
from typing import Callable, Iterator, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp

from popgraph.errors import ShapeError

SparseMatrix = sp.csr_matrix
ArrayLike = Union["Tensor", np.ndarray, Sequence[float], float]
BackwardRule = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_NODE_IDS = itertools.count()
_ACTIVE_TRACE: contextvars.ContextVar[Optional["Trace"]] = contextvars.ContextVar(
    "popgraph_active_trace", default=None
)


class Tensor:
    """
    Dense float64 array with a lazily allocated gradient slot.

    Attributes:
        values: Row-major float64 values
        grad: Accumulated gradient, same shape as values, or None
        requires_grad: Whether operations on this tensor are recorded
        node_id: Identity of this tensor in a trace
        name: Optional parameter name
    """

    __slots__ = ("values", "grad", "requires_grad", "node_id", "name")

    def __init__(self, values: ArrayLike, requires_grad: bool = False, name: Optional[str] = None):
        if isinstance(values, Tensor):
            values = values.values
        self.values = np.asarray(values, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.node_id = next(_NODE_IDS)
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.values.shape

    def accumulate(self, grad: np.ndarray) -> None:
        """Add ``grad`` into the gradient slot, allocating it on first use."""
        if self.grad is None:
            self.grad = np.zeros_like(self.values)
        self.grad += np.reshape(grad, self.values.shape)

    def zero_grad(self) -> None:
        self.grad = None

    def item(self) -> float:
        return float(self.values.reshape(-1)[0]) if self.values.size == 1 else float("nan")

    def __repr__(self) -> str:
        label = f" '{self.name}'" if self.name else ""
        return f"<Tensor{label} shape={self.shape} requires_grad={self.requires_grad}>"


def tensor(values: ArrayLike, name: Optional[str] = None) -> Tensor:
    """Constant tensor (no gradient)."""
    return values if isinstance(values, Tensor) else Tensor(values, requires_grad=False, name=name)


def parameter(values: ArrayLike, name: Optional[str] = None) -> Tensor:
    """Leaf tensor that receives gradients; the values are copied."""
    raw = values.values if isinstance(values, Tensor) else values
    return Tensor(np.array(raw, dtype=np.float64, copy=True), requires_grad=True, name=name)


class TraceRecord(NamedTuple):
    """One recorded operation."""
    op: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    backward: BackwardRule

    @property
    def input_ids(self) -> Tuple[int, ...]:
        return tuple(t.node_id for t in self.inputs)

    @property
    def output_id(self) -> int:
        return self.output.node_id


class Trace:
    """
    Ordered tape of differentiable operations.

    Usage:
        with Trace() as trace:
            loss = mse_loss(forward(...), target)
        backward(loss, trace)
    """

    def __init__(self):
        self.records: List[TraceRecord] = []
        self._token: Optional[contextvars.Token] = None

    def __enter__(self) -> "Trace":
        self._token = _ACTIVE_TRACE.set(self)
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        if self._token is not None:
            _ACTIVE_TRACE.reset(self._token)
            self._token = None
        return False

    def record(self, op: str, inputs: Tuple[Tensor, ...], output: Tensor, rule: BackwardRule) -> None:
        self.records.append(TraceRecord(op, inputs, output, rule))

    def is_topological(self) -> bool:
        """Every operand is a leaf or the output of an earlier record."""
        produced_later = {rec.output_id for rec in self.records}
        seen: set = set()
        for rec in self.records:
            for node in rec.input_ids:
                if node in produced_later and node not in seen:
                    return False
            seen.add(rec.output_id)
        return True

    def __len__(self) -> int:
        return len(self.records)


@contextmanager
def no_trace() -> Iterator[None]:
    """Evaluate operations without recording them."""
    token = _ACTIVE_TRACE.set(None)
    try:
        yield
    finally:
        _ACTIVE_TRACE.reset(token)


def _emit(op: str, inputs: Tuple[Tensor, ...], values: np.ndarray, rule: BackwardRule) -> Tensor:
    trace = _ACTIVE_TRACE.get()
    tracked = trace is not None and any(t.requires_grad for t in inputs)
    out = Tensor(values, requires_grad=tracked)
    if tracked:
        trace.record(op, inputs, out, rule)
    return out


def _require_2d(op: str, *tensors: Tensor) -> None:
    for t in tensors:
        if t.values.ndim != 2:
            raise ShapeError(f"{op}: expected a matrix, got shape {t.shape}")


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def backward(loss: Tensor, trace: Trace) -> None:
    """
    Accumulate d(loss)/d(tensor) into every tensor of the trace that needs it.

    Args:
        loss: Scalar tensor produced inside ``trace``
        trace: Tape the loss was recorded on

    Raises:
        ShapeError: If the loss is not a scalar
        ValueError: If the loss was not recorded on this trace
    """
    if loss.values.size != 1:
        raise ShapeError(f"backward: loss must be a scalar, got shape {loss.shape}")
    if not loss.requires_grad or not any(rec.output is loss for rec in trace.records):
        raise ValueError("backward: loss is not an output recorded on this trace")

    loss.accumulate(np.ones_like(loss.values))
    for rec in reversed(trace.records):
        upstream = rec.output.grad
        if upstream is None:
            continue
        for operand, grad in zip(rec.inputs, rec.backward(upstream)):
            if grad is not None and operand.requires_grad:
                operand.accumulate(grad)


# ---------------------------------------------------------------------------
# Dense linear algebra
# ---------------------------------------------------------------------------

def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    """Matrix product A·B."""
    a, b = tensor(a), tensor(b)
    _require_2d("matmul", a, b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")

    def rule(g: np.ndarray):
        return (
            g @ b.values.T if a.requires_grad else None,
            a.values.T @ g if b.requires_grad else None,
        )

    return _emit("matmul", (a, b), a.values @ b.values, rule)


def spmm(s: SparseMatrix, d: ArrayLike, values: Optional[Tensor] = None) -> Tensor:
    """
    Sparse-dense product S·D.

    Args:
        s: CSR matrix (m × k) supplying the sparsity pattern
        d: Dense k × n operand
        values: Optional differentiable nnz-vector overriding ``s.data`` in
            CSR order (attention coefficients)

    Returns:
        Dense m × n tensor
    """
    d = tensor(d)
    _require_2d("spmm", d)
    if s.shape[1] != d.shape[0]:
        raise ShapeError(f"spmm: cannot multiply sparse {s.shape} by {d.shape}")

    if values is not None:
        if values.values.shape != (s.nnz,):
            raise ShapeError(f"spmm: values must have shape ({s.nnz},), got {values.shape}")
        s = sp.csr_matrix((values.values, s.indices, s.indptr), shape=s.shape)
    out = np.asarray(s @ d.values)

    def rule(g: np.ndarray):
        grad_d = np.asarray(s.T @ g) if d.requires_grad else None
        if values is None:
            return (grad_d,)
        grad_v = None
        if values.requires_grad:
            rows = np.repeat(np.arange(s.shape[0]), np.diff(s.indptr))
            grad_v = np.einsum("ij,ij->i", g[rows], d.values[s.indices])
        return (grad_d, grad_v)

    inputs = (d,) if values is None else (d, values)
    return _emit("spmm", inputs, out, rule)


# ---------------------------------------------------------------------------
# Elementwise and shape operations
# ---------------------------------------------------------------------------

def relu(x: ArrayLike) -> Tensor:
    x = tensor(x)
    mask = (x.values > 0).astype(np.float64)
    return _emit("relu", (x,), x.values * mask, lambda g: (g * mask,))


def leaky_relu(x: ArrayLike, slope: float = 0.2) -> Tensor:
    x = tensor(x)
    # subgradient 0 at exactly 0
    local = np.where(x.values > 0, 1.0, np.where(x.values < 0, slope, 0.0))
    out = np.where(x.values > 0, x.values, slope * x.values)
    return _emit("leaky_relu", (x,), out, lambda g: (g * local,))


def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = tensor(a), tensor(b)
    _same_shape("add", a, b)
    return _emit("add", (a, b), a.values + b.values, lambda g: (g, g))


def add_bias(x: ArrayLike, bias: ArrayLike) -> Tensor:
    """Add a bias row vector to every row of a matrix."""
    x, bias = tensor(x), tensor(bias)
    _require_2d("add_bias", x)
    if bias.values.size != x.shape[1]:
        raise ShapeError(f"add_bias: bias of shape {bias.shape} does not fit matrix {x.shape}")
    row = bias.values.reshape(1, -1)
    return _emit("add_bias", (x, bias), x.values + row, lambda g: (g, g.sum(axis=0).reshape(bias.shape)))


def scale(x: ArrayLike, factor: float) -> Tensor:
    x = tensor(x)
    return _emit("scale", (x,), factor * x.values, lambda g: (factor * g,))


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    """Elementwise product."""
    a, b = tensor(a), tensor(b)
    _same_shape("mul", a, b)
    return _emit("mul", (a, b), a.values * b.values, lambda g: (g * b.values, g * a.values))


def concat_columns(*parts: ArrayLike) -> Tensor:
    tensors = tuple(tensor(p) for p in parts)
    if not tensors:
        raise ShapeError("concat_columns: nothing to concatenate")
    _require_2d("concat_columns", *tensors)
    rows = {t.shape[0] for t in tensors}
    if len(rows) != 1:
        raise ShapeError(f"concat_columns: row counts differ {[t.shape for t in tensors]}")
    bounds = np.cumsum([0] + [t.shape[1] for t in tensors])

    def rule(g: np.ndarray):
        return tuple(g[:, bounds[i]:bounds[i + 1]] for i in range(len(tensors)))

    return _emit("concat_columns", tensors, np.hstack([t.values for t in tensors]), rule)


def slice_columns(x: ArrayLike, start: int, stop: int) -> Tensor:
    x = tensor(x)
    _require_2d("slice_columns", x)

    def rule(g: np.ndarray):
        full = np.zeros_like(x.values)
        full[:, start:stop] = g
        return (full,)

    return _emit("slice_columns", (x,), x.values[:, start:stop].copy(), rule)


def row_mean(x: ArrayLike) -> Tensor:
    """Mean across the columns of each row, as an m × 1 matrix."""
    x = tensor(x)
    _require_2d("row_mean", x)
    width = x.shape[1]
    return _emit(
        "row_mean", (x,), x.values.mean(axis=1, keepdims=True),
        lambda g: (np.repeat(g, width, axis=1) / width,),
    )


def total(x: ArrayLike) -> Tensor:
    """Sum of all entries, as a scalar."""
    x = tensor(x)
    return _emit("sum", (x,), np.asarray(x.values.sum()), lambda g: (np.full_like(x.values, float(g)),))


def flatten(x: ArrayLike) -> Tensor:
    x = tensor(x)
    return _emit("flatten", (x,), x.values.reshape(-1), lambda g: (g.reshape(x.shape),))


def gather_rows(x: ArrayLike, index: np.ndarray) -> Tensor:
    """Select rows (or entries of a vector) by integer index, with repeats."""
    x = tensor(x)
    index = np.asarray(index, dtype=np.int64)

    def rule(g: np.ndarray):
        full = np.zeros_like(x.values)
        np.add.at(full, index, g)
        return (full,)

    return _emit("gather_rows", (x,), x.values[index], rule)


def segment_softmax(scores: ArrayLike, segments: np.ndarray, num_segments: Optional[int] = None) -> Tensor:
    """
    Softmax over groups of entries sharing a segment id.

    Args:
        scores: Vector of per-edge scores
        segments: Segment (target node) id of every entry
        num_segments: Number of segments; defaults to ``max(segments) + 1``

    Returns:
        Vector of positive weights summing to one within each segment
    """
    scores = tensor(scores)
    segments = np.asarray(segments, dtype=np.int64)
    if scores.values.ndim != 1 or segments.shape != scores.shape:
        raise ShapeError(f"segment_softmax: scores {scores.shape} and segments {segments.shape} must be equal-length vectors")
    if scores.values.size == 0:
        return _emit("segment_softmax", (scores,), np.zeros(0), lambda g: (np.zeros(0),))

    count = int(segments.max()) + 1 if num_segments is None else num_segments
    peak = np.full(count, -np.inf)
    np.maximum.at(peak, segments, scores.values)
    expo = np.exp(scores.values - peak[segments])
    denom = np.bincount(segments, weights=expo, minlength=count)
    out = expo / denom[segments]

    def rule(g: np.ndarray):
        weighted = np.bincount(segments, weights=out * g, minlength=count)
        return (out * (g - weighted[segments]),)

    return _emit("segment_softmax", (scores,), out, rule)


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------

def _loss_operands(op: str, pred: ArrayLike, target: ArrayLike) -> Tuple[Tensor, Tensor]:
    pred, target = tensor(pred), tensor(target)
    if pred.values.ndim != 1 or pred.shape != target.shape:
        raise ShapeError(f"{op}: prediction {pred.shape} and target {target.shape} must be equal-length vectors")
    if pred.values.size == 0:
        raise ShapeError(f"{op}: empty input")
    return pred, target


def mse_loss(pred: ArrayLike, target: ArrayLike) -> Tensor:
    """Mean squared error."""
    pred, target = _loss_operands("mse_loss", pred, target)
    diff = pred.values - target.values
    n = diff.size

    def rule(g: np.ndarray):
        grad = float(g) * 2.0 * diff / n
        return (grad, -grad)

    return _emit("mse_loss", (pred, target), np.asarray(np.mean(diff * diff)), rule)


def mae_loss(pred: ArrayLike, target: ArrayLike) -> Tensor:
    """Mean absolute error."""
    pred, target = _loss_operands("mae_loss", pred, target)
    diff = pred.values - target.values
    n = diff.size

    def rule(g: np.ndarray):
        grad = float(g) * np.sign(diff) / n
        return (grad, -grad)

    return _emit("mae_loss", (pred, target), np.asarray(np.mean(np.abs(diff))), rule)


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------

def grad_check(
    function: Callable[..., Tensor],
    point: Sequence[ArrayLike],
    step: float = 1e-5,
) -> float:
    """
    Compare autodiff gradients with central finite differences.

    Args:
        function: Maps one tensor per entry of ``point`` to a scalar tensor
        point: Values at which to differentiate
        step: Finite-difference step

    Returns:
        max over coordinates of |fd - ad| / max(1, |fd|, |ad|)
    """
    arrays = [np.array(p.values if isinstance(p, Tensor) else p, dtype=np.float64, copy=True) for p in point]
    leaves = [parameter(a) for a in arrays]
    with Trace() as trace:
        out = function(*leaves)
    backward(out, trace)

    def evaluate() -> float:
        with no_trace():
            return float(function(*[Tensor(a) for a in arrays]).values)

    worst = 0.0
    for leaf, arr in zip(leaves, arrays):
        analytic = leaf.grad if leaf.grad is not None else np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            original = arr[idx]
            arr[idx] = original + step
            upper = evaluate()
            arr[idx] = original - step
            lower = evaluate()
            arr[idx] = original
            numeric = (upper - lower) / (2.0 * step)
            ad = float(analytic[idx])
            worst = max(worst, abs(numeric - ad) / max(1.0, abs(numeric), abs(ad)))
    return worst
