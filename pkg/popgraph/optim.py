"""
AdamW with decoupled weight decay.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from popgraph.autodiff import Tensor
from popgraph.errors import NumericalError, ShapeError


@dataclass(frozen=True)
class AdamWState:
    """Moment estimates and hyperparameters of one optimization run."""
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 0.01
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adamw_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamWState,
) -> Tuple[Dict[str, np.ndarray], AdamWState]:
    """
    Apply one AdamW update.

    m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2;
    theta <- theta - lr (m_hat / (sqrt(v_hat) + eps) + wd theta)

    Args:
        params: Current parameter values by name
        grads: Gradients by name (same keys and shapes)
        state: Optimizer state before the step

    Returns:
        New parameter values and the state after the step; inputs are not modified

    Raises:
        ShapeError: If keys or shapes disagree
        NumericalError: If any gradient is non-finite (the step is rejected)
    """
    if set(params) != set(grads):
        raise ShapeError(f"adamw_step: parameter names {sorted(params)} != gradient names {sorted(grads)}")
    bad = [name for name, g in grads.items() if not np.all(np.isfinite(g))]
    if bad:
        raise NumericalError(f"adamw_step: non-finite gradient for {', '.join(sorted(bad))}; step rejected")

    t = state.step + 1
    correction1 = 1.0 - state.beta1 ** t
    correction2 = 1.0 - state.beta2 ** t
    new_params: Dict[str, np.ndarray] = {}
    new_m: Dict[str, np.ndarray] = {}
    new_v: Dict[str, np.ndarray] = {}

    for name, theta in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        if g.shape != np.shape(theta):
            raise ShapeError(f"adamw_step: gradient {g.shape} does not match parameter '{name}' {np.shape(theta)}")
        m = state.m.get(name, np.zeros_like(g))
        v = state.v.get(name, np.zeros_like(g))
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        m_hat = m / correction1
        v_hat = v / correction2
        new_params[name] = theta - state.learning_rate * (
            m_hat / (np.sqrt(v_hat) + state.epsilon) + state.weight_decay * theta
        )
        new_m[name] = m
        new_v[name] = v

    return new_params, replace(state, step=t, m=new_m, v=new_v)


class AdamW:
    """
    Stateful wrapper that updates named :class:`Tensor` parameters in place.
    """

    def __init__(
        self,
        learning_rate: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        epsilon: float = 1e-8,
        weight_decay: float = 0.01,
        logger: Optional[logging.Logger] = None
    ):
        self.state = AdamWState(
            learning_rate=learning_rate, beta1=beta1, beta2=beta2,
            epsilon=epsilon, weight_decay=weight_decay,
        )
        self._logger = logger or logging.getLogger(__name__)

    def step(self, params: Mapping[str, Tensor]) -> None:
        """Update every parameter from its accumulated gradient (missing gradients count as zero)."""
        values = {name: p.values for name, p in params.items()}
        grads = {
            name: p.grad if p.grad is not None else np.zeros_like(p.values)
            for name, p in params.items()
        }
        updated, self.state = adamw_step(values, grads, self.state)
        for name, p in params.items():
            p.values = updated[name]
        self._logger.debug(f"[AdamW] step {self.state.step} applied to {len(params)} tensors")
