"""Loss bookkeeping shared across training stages."""

from __future__ import annotations

from dataclasses import dataclass

from .numerics import Tensor
from .numerics import ops


@dataclass
class LossValue:
    """A scalar training loss with its per-objective breakdown.

    The total is constructed as the sum of the components, so the bookkeeping
    identity holds by construction and is re-checked in tests.
    """

    total: Tensor
    components: dict[str, Tensor]

    @classmethod
    def from_components(cls, components: dict[str, Tensor]) -> "LossValue":
        if not components:
            raise ValueError("a loss needs at least one component")
        parts = list(components.values())
        total = parts[0]
        for p in parts[1:]:
            total = ops.add(total, p)
        return cls(total=total, components=dict(components))

    @property
    def value(self) -> float:
        return self.total.item()

    def component_values(self) -> dict[str, float]:
        return {name: t.item() for name, t in self.components.items()}
