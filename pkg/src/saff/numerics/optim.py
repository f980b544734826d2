"""SGD with momentum."""
from __future__ import annotations

from typing import Iterable

import numpy as np

from .tensor import Tensor


class SGD:
    """``v <- momentum * v + grad``; ``p <- p - lr * v``; grads are cleared after each step."""

    def __init__(self, params: Iterable[Tensor], lr: float = 0.01, momentum: float = 0.9):
        self.params = list(params)
        self.lr = float(lr)
        self.momentum = float(momentum)
        self._velocity = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        for p, v in zip(self.params, self._velocity):
            if p.grad is None:
                continue
            v *= self.momentum
            v += p.grad
            p.data -= self.lr * v
        self.zero_grad()

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


def sgd_step(params: Iterable[Tensor], lr: float, momentum: float, state: dict | None = None) -> dict:
    """Functional form of one momentum step. ``state`` maps ``id(param)`` to its velocity buffer."""
    state = {} if state is None else state
    for p in params:
        if p.grad is None:
            continue
        v = state.setdefault(id(p), np.zeros_like(p.data))
        v *= momentum
        v += p.grad
        p.data -= lr * v
        p.grad = None
    return state
