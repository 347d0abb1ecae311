"""Adam with bias correction over named parameter lists."""

from __future__ import annotations

import numpy as np

from .errors import NumericError


class Adam:
    def __init__(self, named_params, lr=1e-4, betas=(0.9, 0.999), eps=1e-8):
        self.items = [(name, p) for name, p in named_params]
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self._m = [np.zeros_like(p.data) for _, p in self.items]
        self._v = [np.zeros_like(p.data) for _, p in self.items]

    def zero_grad(self):
        for _, p in self.items:
            p.zero_grad()

    def step(self):
        self.t += 1
        bc1 = 1.0 - self.b1 ** self.t
        bc2 = 1.0 - self.b2 ** self.t
        for i, (name, p) in enumerate(self.items):
            g = p.grad
            if g is None:
                continue
            if not np.isfinite(g).all():
                raise NumericError(f"non-finite gradient for parameter {name}")
            m = self._m[i]
            v = self._v[i]
            m += (1.0 - self.b1) * (g - m)
            v += (1.0 - self.b2) * (g * g - v)
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
