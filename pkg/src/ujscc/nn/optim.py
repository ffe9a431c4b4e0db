"""Adam optimizer over Param objects."""

import numpy as np

from ujscc.nn.layers import Param


class Adam:
    """Standard Adam with bias correction; deterministic given inputs.

    ``lr`` is read at each step, so schedules can just assign to it.
    """

    def __init__(
        self,
        params: list[Param],
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.value -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_items(self):
        items = [("t", np.array([float(self.t)]))]
        for p, m, v in zip(self.params, self.m, self.v):
            items.append((f"m.{p.name}", m))
            items.append((f"v.{p.name}", v))
        return items
