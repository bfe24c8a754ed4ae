"""Adam with bias correction."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .tensor import NumericFailure, Tensor


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError(f"learning rate must be positive, got {self.lr}")


def adam_step(params: Sequence[Tensor], state: AdamState) -> AdamState:
    """Apply one Adam update in place and zero the gradients.

    Every parameter must carry a gradient. The update is computed for all
    parameters before any is written, so a non-finite update leaves the
    parameters untouched.
    """
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    if len(state.m) != len(params):
        raise ValueError("optimizer state does not match parameter list")
    for i, p in enumerate(params):
        if p.grad is None:
            raise ValueError(f"parameter {i} has no gradient")
        if p.grad.shape != p.data.shape or state.m[i].shape != p.data.shape:
            raise ValueError(f"shape mismatch for parameter {i}")

    t = state.step_count + 1
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    new_m, new_v, updates = [], [], []
    for p, m, v in zip(params, state.m, state.v):
        g = p.grad
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        upd = state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        if not np.all(np.isfinite(upd)):
            raise NumericFailure("non-finite Adam update")
        new_m.append(m)
        new_v.append(v)
        updates.append(upd)

    for p, upd in zip(params, updates):
        p.data -= upd
        p.grad = np.zeros_like(p.data)
    state.m, state.v = new_m, new_v
    state.step_count = t
    return state


class Adam:
    """Adam bound to a fixed parameter list."""

    def __init__(self, params: Sequence[Tensor], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)

    def step(self) -> None:
        adam_step(self.params, self.state)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None
