"""
Adam with bias correction. Moments live on each Parameter (p.adam).
"""

from typing import Iterable, List

import numpy as np

from src.autodiff.nn import Parameter


def adam_step(
    params: Iterable[Parameter],
    lr: float = 1e-4,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One update of every parameter that has a gradient"""
    for p in params:
        if p.grad is None:
            continue
        state = p.adam
        if state.m is None:
            state.m = np.zeros_like(p.data)
            state.v = np.zeros_like(p.data)
        g = p.grad.astype(p.data.dtype, copy=False)
        state.step += 1
        state.m = beta1 * state.m + (1.0 - beta1) * g
        state.v = beta2 * state.v + (1.0 - beta2) * g * g
        m_hat = state.m / (1.0 - beta1**state.step)
        v_hat = state.v / (1.0 - beta2**state.step)
        p.data = (p.data - lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.data.dtype, copy=False)


class Adam:
    def __init__(
        self,
        params: Iterable[Parameter],
        lr: float = 1e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params: List[Parameter] = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        adam_step(self.params, self.lr, self.beta1, self.beta2, self.eps)
