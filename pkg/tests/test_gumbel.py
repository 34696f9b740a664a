"""Gumbel-Softmax contracts: one-hot forward, sampling statistics, limits."""

import math

import numpy as np
import pytest

from coep.numerics import NumericError, Parameter, Rng, Tensor, backward, ops


def test_straight_through_forward_is_exact_one_hot():
    rng = Rng(0)
    for trial in range(50):
        logits = Tensor(rng.normal((7,), std=2.0))
        out = ops.gumbel_softmax(logits, 1.0, rng.child(trial), straight_through=True)
        assert sorted(out.data.tolist())[:-1] == [0.0] * 6
        assert out.data.max() == 1.0
        assert out.data.sum() == 1.0


def test_zero_noise_low_temperature_is_argmax_one_hot():
    logits = Tensor([0.2, 1.9, -0.5])
    out = ops.gumbel_softmax(logits, 1e-6, None, straight_through=False)
    np.testing.assert_allclose(out.data, [0.0, 1.0, 0.0], atol=1e-6)


def test_monte_carlo_argmax_frequencies():
    # argmax(logits + gumbel) ~ Categorical(softmax(logits))
    logits = Tensor([math.log(1), math.log(2), math.log(3)])
    rng = Rng(2024)
    counts = np.zeros(3)
    n = 100_000
    for i in range(n):
        out = ops.gumbel_softmax(logits, 1.0, rng, straight_through=True)
        counts[int(np.argmax(out.data))] += 1
    freqs = counts / n
    np.testing.assert_allclose(freqs, [1 / 6, 2 / 6, 3 / 6], atol=0.01)


def test_temperature_must_be_positive():
    with pytest.raises(NumericError):
        ops.gumbel_softmax(Tensor([1.0, 2.0]), 0.0, Rng(0))
    with pytest.raises(NumericError):
        ops.gumbel_softmax(Tensor([1.0, 2.0]), -1.0, Rng(0))


def test_straight_through_backward_uses_soft_gradient():
    logits = Parameter(np.array([0.5, -0.2, 0.1]), name="logits")
    out = ops.gumbel_softmax(logits, 0.8, Rng(3), straight_through=True)
    loss = ops.sum_all(ops.mul(out, Tensor([1.0, 2.0, 3.0])))
    backward(loss)
    assert logits.grad is not None
    assert np.abs(logits.grad).sum() > 0  # hard forward alone has zero gradient


def test_seeded_determinism():
    logits = Tensor([0.3, 0.1, -0.4, 1.2])
    a = ops.gumbel_softmax(logits, 1.0, Rng(55), straight_through=True)
    b = ops.gumbel_softmax(logits, 1.0, Rng(55), straight_through=True)
    np.testing.assert_array_equal(a.data, b.data)
