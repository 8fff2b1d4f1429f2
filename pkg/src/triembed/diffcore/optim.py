"""SGD with momentum and a step-decay learning-rate schedule."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .tensor import Tensor


@dataclass
class OptimizerState:
    learning_rate: float = 0.001
    momentum: float = 0.9
    velocity: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")


def sgd_step(
    params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: OptimizerState
) -> tuple[Sequence[np.ndarray], OptimizerState]:
    """One momentum-SGD update, in place.

    v <- momentum * v + g;  p <- p - lr * v.
    Velocity buffers are created as zeros on the first call.
    """
    if len(params) != len(grads):
        raise ValueError(f"{len(params)} parameters but {len(grads)} gradients")
    if not state.velocity:
        state.velocity = [np.zeros_like(p) for p in params]
    if len(state.velocity) != len(params):
        raise ValueError("optimizer state was built for a different parameter list")
    for p, g, v in zip(params, grads, state.velocity):
        if p.shape != g.shape or p.shape != v.shape:
            raise ValueError(f"shape mismatch: param {p.shape}, grad {g.shape}, velocity {v.shape}")
    for p, g, v in zip(params, grads, state.velocity):
        v *= state.momentum
        v += g
        p -= state.learning_rate * v
    return params, state


class SGD:
    """Momentum SGD over a list of tracked tensors."""

    def __init__(self, params: Sequence[Tensor], lr: float = 0.001, momentum: float = 0.9):
        self.params = list(params)
        self.state = OptimizerState(learning_rate=lr, momentum=momentum)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self, lr: float | None = None) -> None:
        if lr is not None:
            self.state.learning_rate = lr
        sgd_step([p.data for p in self.params], [p.grad for p in self.params], self.state)


@dataclass(frozen=True)
class ScheduleConfig:
    base_lr: float = 0.001
    decay_ratio: float = 10.0
    decay_every: int = 70

    def __post_init__(self) -> None:
        if not self.base_lr > 0:
            raise ValueError(f"base_lr must be positive, got {self.base_lr}")
        if not self.decay_ratio > 1:
            raise ValueError(f"decay_ratio must exceed 1, got {self.decay_ratio}")
        if self.decay_every < 1:
            raise ValueError(f"decay_every must be a positive epoch count, got {self.decay_every}")


def lr_at_epoch(epoch: int, cfg: ScheduleConfig) -> float:
    if epoch < 0:
        raise ValueError(f"epoch must be non-negative, got {epoch}")
    return cfg.base_lr / cfg.decay_ratio ** (epoch // cfg.decay_every)
