"""Shared training-loop plumbing: config, batching, log records."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .numerics import AdamW, AdamWConfig, Rng


@dataclass
class TrainConfig:
    epochs: int = 3
    max_steps: int = 0  # 0 = no cap
    batch_size: int = 32
    lr: float = 1e-3
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def optimizer(self, params) -> AdamW:
        return AdamW(
            params,
            AdamWConfig(
                lr=self.lr,
                weight_decay=self.weight_decay,
                beta1=self.beta1,
                beta2=self.beta2,
                eps=self.eps,
            ),
        )


def batches(items: Sequence, batch_size: int, rng: Rng) -> list[list]:
    """Shuffled batches; the final short batch is kept."""
    order = rng.permutation(len(items))
    shuffled = [items[i] for i in order]
    return [
        shuffled[i : i + batch_size] for i in range(0, len(shuffled), batch_size)
    ]


def smoothed(values: list[float], window: int = 5) -> list[float]:
    """Trailing moving average used for loss-curve checks."""
    out = []
    for i in range(len(values)):
        lo = max(0, i - window + 1)
        out.append(sum(values[lo : i + 1]) / (i + 1 - lo))
    return out
