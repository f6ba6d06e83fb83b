"""Adam, both as a functional update on arrays and as an optimizer over tensors."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, shape, **kw) -> AdamState:
        return cls(np.zeros(shape), np.zeros(shape), **kw)

    def select(self, mask: np.ndarray, axis: int = 0) -> AdamState:
        take = (slice(None),) * axis + (mask,)
        return AdamState(self.m[take], self.v[take], self.t, self.lr, self.beta1, self.beta2, self.eps)


def adam_update(params: np.ndarray, grads: np.ndarray, state: AdamState) -> np.ndarray:
    """Bias-corrected Adam step; updates ``state`` in place and returns the new parameters."""
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ValueError("parameter, gradient and moment shapes differ")
    state.t += 1
    state.m = state.beta1 * state.m + (1 - state.beta1) * grads
    state.v = state.beta2 * state.v + (1 - state.beta2) * grads * grads
    m_hat = state.m / (1 - state.beta1**state.t)
    v_hat = state.v / (1 - state.beta2**state.t)
    return params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


def adam_step(params: list[Tensor], grads: list[np.ndarray | None], states: list[AdamState]) -> None:
    for p, g, s in zip(params, grads, states):
        p.data = adam_update(p.data, np.zeros_like(p.data) if g is None else g, s)


class Adam:
    def __init__(self, params: list[Tensor], lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.states = [AdamState.zeros(p.shape, lr=lr, beta1=betas[0], beta2=betas[1], eps=eps) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        adam_step(self.params, [p.grad for p in self.params], self.states)
