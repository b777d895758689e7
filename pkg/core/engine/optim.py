"""
Adam Optimizer

Bias-corrected Adam over a list of named parameters. Missing gradients
(parameters the loss never reached) are treated as zeros.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from core.engine.tensor import Parameter
from core.errors import ShapeError


NamedParameters = Sequence[Tuple[str, Parameter]]


@dataclass
class AdamState:
    """Per-parameter moment estimates plus the shared step counter."""

    first_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    step_count: int = 0

    @classmethod
    def zeros(cls, params: NamedParameters) -> "AdamState":
        return cls(
            first_moment={name: np.zeros_like(p.data) for name, p in params},
            second_moment={name: np.zeros_like(p.data) for name, p in params},
        )


def adam_step(
    params: NamedParameters,
    state: AdamState,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> AdamState:
    """
    Apply one Adam update in place.

    Args:
        params: (name, parameter) pairs; gradients are read from .grad
        state: Moments keyed by parameter name
        lr, beta1, beta2, eps: Adam hyperparameters

    Returns:
        The updated state (same object)

    Raises:
        ShapeError: state and parameter shapes disagree
    """
    for name, p in params:
        m = state.first_moment.get(name)
        v = state.second_moment.get(name)
        if m is None or v is None or m.shape != p.shape or v.shape != p.shape:
            raise ShapeError(f"adam state for '{name}' does not match parameter shape {p.shape}")
        if p.grad is not None and p.grad.shape != p.shape:
            raise ShapeError(f"gradient of '{name}' has shape {p.grad.shape}, expected {p.shape}")

    state.step_count += 1
    t = state.step_count
    correction1 = 1.0 - beta1 ** t
    correction2 = 1.0 - beta2 ** t

    for name, p in params:
        grad = p.grad if p.grad is not None else np.zeros_like(p.data)
        m = state.first_moment[name]
        v = state.second_moment[name]
        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * grad * grad
        m_hat = m / correction1
        v_hat = v / correction2
        p.data -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.dtype)

    return state


class Adam:
    """Optimizer object tying a parameter list to its AdamState."""

    def __init__(
        self,
        params: NamedParameters,
        lr: float = 1e-3,
        betas: Tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
    ):
        self.params: List[Tuple[str, Parameter]] = list(params)
        names = [name for name, _ in self.params]
        if len(set(names)) != len(names):
            raise ValueError("parameter names must be unique")
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.state = AdamState.zeros(self.params)

    def step(self) -> None:
        adam_step(self.params, self.state, self.lr, self.betas[0], self.betas[1], self.eps)

    def zero_grad(self) -> None:
        for _, p in self.params:
            p.zero_grad()
