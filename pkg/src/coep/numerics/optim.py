"""AdamW with decoupled weight decay.

Reference hyperparameters follow the usual fine-tuning regime (lr 1e-5,
weight decay 0.01); desk-scale training configs override the learning rate
upward since all models here start from random initialization.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .tensor import Parameter


@dataclass
class AdamWConfig:
    lr: float = 1e-5
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


class AdamW:
    """Decoupled-weight-decay Adam over a fixed parameter list.

    Frozen or non-trainable parameters are never updated, not even by the
    weight-decay term.  Parameters whose gradient buffer is empty are treated
    as zero-gradient (weight decay still applies).
    """

    def __init__(self, params: Iterable[Parameter], config: AdamWConfig):
        self.params = list(params)
        self.config = config
        self.step_count = 0
        self._m = {id(p): np.zeros_like(p.data) for p in self.params}
        self._v = {id(p): np.zeros_like(p.data) for p in self.params}

    def step(self) -> None:
        c = self.config
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - c.beta1**t
        bc2 = 1.0 - c.beta2**t
        for p in self.params:
            if p.frozen or not p.trainable:
                continue
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            m = self._m[id(p)]
            v = self._v[id(p)]
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * (g * g)
            mhat = m / bc1
            vhat = v / bc2
            update = c.lr * mhat / (np.sqrt(vhat) + c.eps)
            if c.weight_decay:
                update = update + (c.lr * c.weight_decay) * p.data
            p.data = (p.data - update).astype(np.float32)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None
