"""Deterministic random number generation.

All stochastic behaviour in this package flows through :class:`Rng`, a thin
wrapper around numpy's PCG64 bit generator (O'Neill's permuted congruential
generator, XSL-RR 128/64 variant).  PCG64's state-update rule is fully
specified by numpy, so a given seed produces the same stream on every
platform.  Substreams are derived through ``SeedSequence`` entropy mixing so
that per-epoch / per-example randomness stays reproducible regardless of
iteration order.
"""

from __future__ import annotations

import numpy as np

# Gumbel noise uses -ln(-ln(u)); u is clamped away from {0, 1} so the double
# log can never produce infinities in float32.
_UNIFORM_LO = 1e-10
_UNIFORM_HI = 1.0 - 1e-7


class Rng:
    """Seeded PCG64 stream with deterministic child-stream derivation."""

    def __init__(self, seed: int, _spawn_key: tuple[int, ...] = ()):
        if seed < 0:
            raise ValueError(f"seed must be a non-negative integer, got {seed}")
        self.seed = int(seed)
        self._spawn_key = _spawn_key
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=_spawn_key)
        self._gen = np.random.Generator(np.random.PCG64(seq))

    def child(self, *keys: int) -> "Rng":
        """Derive an independent stream keyed by ``keys``.

        ``rng.child(epoch)`` or ``rng.child(epoch, example_index)`` give
        stable per-unit streams that do not depend on how many draws were
        taken from the parent.
        """
        return Rng(self.seed, self._spawn_key + tuple(int(k) for k in keys))

    def uniform(self, shape=()) -> np.ndarray:
        return self._gen.random(size=shape, dtype=np.float64)

    def normal(self, shape=(), std: float = 1.0) -> np.ndarray:
        return (self._gen.standard_normal(size=shape, dtype=np.float64) * std).astype(
            np.float32
        )

    def integers(self, low: int, high: int, shape=()) -> np.ndarray:
        """Uniform integers in [low, high)."""
        return self._gen.integers(low, high, size=shape)

    def choice_index(self, n: int) -> int:
        """One uniform index in [0, n)."""
        return int(self._gen.integers(0, n))

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def gumbel(self, shape=()) -> np.ndarray:
        """Standard Gumbel(0, 1) noise via -ln(-ln(u)), u clamped to (0, 1)."""
        u = np.clip(self._gen.random(size=shape, dtype=np.float64), _UNIFORM_LO, _UNIFORM_HI)
        return -np.log(-np.log(u))
