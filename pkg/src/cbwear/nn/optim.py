"""Adam with decoupled weight decay and per-group learning rates."""

from __future__ import annotations

import numpy as np

from .core import Parameter


class Adam:
    """Standard Adam; weight decay is applied directly to the weights
    (decoupled from the adaptive step). `lr` may be a float or a mapping
    from parameter group name to learning rate."""

    def __init__(self, params: list[Parameter], lr=1e-4, weight_decay=1e-5,
                 beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2, self.eps = beta1, beta2, eps

    def _lr_of(self, p: Parameter) -> float:
        if isinstance(self.lr, dict):
            return self.lr[p.group]
        return float(self.lr)

    def step(self):
        b1, b2, eps, wd = self.beta1, self.beta2, self.eps, self.weight_decay
        for p in self.params:
            lr = self._lr_of(p)
            p.step += 1
            g = p.grad
            p.m[...] = b1 * p.m + (1 - b1) * g
            p.v[...] = b2 * p.v + (1 - b2) * (g * g)
            mhat = p.m / (1 - b1 ** p.step)
            vhat = p.v / (1 - b2 ** p.step)
            p.value[...] = p.value - lr * mhat / (np.sqrt(vhat) + eps) - lr * wd * p.value

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()
