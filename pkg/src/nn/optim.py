"""Adam optimizer with bias-corrected moment estimates."""

from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from src.nn.tensor import NonFiniteError, Tensor


@dataclass
class AdamState:
    """Hyperparameters, per-parameter moments and the step counter."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(state: AdamState, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]) -> None:
    """Update `params` in place; a non-finite gradient aborts before any change."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient for {name}; step aborted")

    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    step_size = state.lr / bc1

    for name, g in grads.items():
        if name not in state.m:
            state.m[name] = np.zeros_like(params[name])
            state.v[name] = np.zeros_like(params[name])
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        params[name] -= step_size * m / (np.sqrt(v / bc2) + state.eps)


class Adam:
    """Adam over a named set of parameter tensors."""

    def __init__(
        self,
        params: Dict[str, Tensor],
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> None:
        self.params = params
        self.state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)

    def step(self) -> None:
        """Apply one update using the gradients left by `backward`.

        Parameters that did not participate (no gradient) are left alone.
        """
        grads = {name: p.grad for name, p in self.params.items() if p.grad is not None}
        adam_step(self.state, {name: self.params[name].data for name in grads}, grads)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()
