from __future__ import annotations

import numpy as np

from ..nn import Module, param


class Adam:
    """Adaptive-moment gradient descent with decoupled weight decay.

    Moments are keyed by parameter name, so the optimizer keeps working when
    parameter tensors are replaced after each step.
    """

    def __init__(self, model: Module, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8, weight_decay: float = 0.0):
        self.model = model
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.weight_decay = weight_decay
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, grads: dict[int, object]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name, p in list(self.model.named_parameters()):
            g = grads[p.node_id].data if p.node_id in grads else np.zeros_like(p.data)
            m = self.m.get(name, 0.0) * self.beta1 + (1.0 - self.beta1) * g
            v = self.v.get(name, 0.0) * self.beta2 + (1.0 - self.beta2) * g * g
            self.m[name], self.v[name] = m, v
            new = p.data - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            if self.weight_decay:
                new = new - self.lr * self.weight_decay * p.data
            self.model.set_parameter(name, param(new))
