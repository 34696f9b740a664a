"""Minimal float32 tensor engine: autograd tape, ops, AdamW, seeded RNG."""

from . import ops
from .optim import AdamW, AdamWConfig
from .rng import Rng
from .tensor import (
    DoubleBackwardError,
    NumericError,
    Parameter,
    Tensor,
    backward,
    grad_enabled,
    no_grad,
)

__all__ = [
    "AdamW",
    "AdamWConfig",
    "DoubleBackwardError",
    "NumericError",
    "Parameter",
    "Rng",
    "Tensor",
    "backward",
    "grad_enabled",
    "no_grad",
    "ops",
]
