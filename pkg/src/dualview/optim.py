"""Adam with per-epoch multiplicative learning-rate decay."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .tensor import Tensor


@dataclass
class AdamState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    decay_per_epoch: float = 0.99
    t: int = 0
    epoch: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @property
    def effective_lr(self) -> float:
        return self.learning_rate * self.decay_per_epoch ** self.epoch


class Adam:
    def __init__(self, params: Sequence[Tensor], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, epsilon: float = 1e-8, decay_per_epoch: float = 0.99):
        self.params = list(params)
        self.state = AdamState(lr, beta1, beta2, epsilon, decay_per_epoch)
        self.state.m = [np.zeros_like(p.data) for p in self.params]
        self.state.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        st = self.state
        missing = [p.name or str(i) for i, p in enumerate(self.params) if p.grad is None]
        if missing:
            raise ValueError(f"adam_step: no gradient for parameter(s) {', '.join(missing)}")
        st.t += 1
        lr = st.effective_lr
        bc1 = 1 - st.beta1 ** st.t
        bc2 = 1 - st.beta2 ** st.t
        for p, m, v in zip(self.params, st.m, st.v):
            g = p.grad
            m *= st.beta1
            m += (1 - st.beta1) * g
            v *= st.beta2
            v += (1 - st.beta2) * g * g
            update = (lr / bc1) * m / (np.sqrt(v / bc2) + st.epsilon)
            p.data -= update.astype(p.dtype)

    def end_epoch(self) -> None:
        """Signal an epoch boundary; the learning rate shrinks by ``decay_per_epoch``."""
        self.state.epoch += 1

    @property
    def lr(self) -> float:
        return self.state.effective_lr
