"""Stochastic gradient descent with momentum and weight decay.

Update rule (momentum-buffer formulation, decay added to the gradient):

    v <- momentum * v + grad + weight_decay * param
    param <- param - lr * v

The per-epoch schedule lr_e = lr_0 * 0.99^e is applied by the caller.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np


def sgd_step(param, grad, velocity, lr: float, momentum: float = 0.9, weight_decay: float = 1e-4):
    """One update; returns (new_param, new_velocity). Works on arrays or scalars."""
    param = np.asarray(param, dtype=np.float64) if not np.isscalar(param) else param
    v_new = momentum * velocity + grad + weight_decay * param
    return param - lr * v_new, v_new


class SgdOptimizer:
    """Stateful SGD over a list of :class:`~polarmos.netcore.blocks.Param`."""

    def __init__(self, params: Sequence, momentum: float = 0.9, weight_decay: float = 1e-4):
        self.params = list(params)
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocities = [np.zeros_like(p.value) for p in self.params]

    def step(self, lr: float) -> None:
        for p, v in zip(self.params, self.velocities):
            v *= self.momentum
            v += p.grad
            v += self.weight_decay * p.value
            p.value -= lr * v

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad[...] = 0
