"""Shared error types mapped to CLI exit codes (see cli module docstring)."""


class DataError(ValueError):
    """Missing, empty, or malformed input data."""


class TrainingContractError(RuntimeError):
    """A training-stage invariant was violated."""


class FreezeViolationError(TrainingContractError):
    """A parameter that must stay frozen changed during training."""
