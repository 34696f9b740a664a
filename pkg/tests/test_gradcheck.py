"""Central finite-difference checks for every differentiable op.

Each case builds a scalar loss (a fixed random weighting of the op output)
from leaf tensors, compares analytic gradients against central differences
with eps = 1e-3 at relative error 1e-3, over seeded random instances of rank
<= 3 and dims <= 5.
"""

import numpy as np
import pytest

from coep.numerics import Parameter, Rng, Tensor, backward, ops

EPS = 1e-3
REL_TOL = 1e-3
TRIALS = 20


def _loss_weights(rng: Rng, shape) -> np.ndarray:
    return rng.normal(shape, std=1.0) + 0.1


def check_gradients(build, seeds=range(TRIALS)):
    """build(rng) -> (leaves, forward) where forward() returns a scalar Tensor
    recomputable from the current leaf data."""
    for seed in seeds:
        rng = Rng(1000 + seed)
        leaves, forward = build(rng)
        loss = forward()
        backward(loss)
        for leaf in leaves:
            assert leaf.grad is not None, f"no gradient reached leaf (seed {seed})"
            analytic = leaf.grad.copy()
            flat = leaf.data.reshape(-1)
            for idx in range(flat.size):
                orig = flat[idx]
                flat[idx] = orig + EPS
                f_up = forward().item()
                flat[idx] = orig - EPS
                f_down = forward().item()
                flat[idx] = orig
                fd = (f_up - f_down) / (2 * EPS)
                a = analytic.reshape(-1)[idx]
                err = abs(a - fd) / max(abs(a), abs(fd), 1.0)
                assert err <= REL_TOL, (
                    f"seed {seed}: analytic {a} vs finite-diff {fd} (err {err:.2e})"
                )
            leaf.grad = None


def _leaf(rng: Rng, shape, std=0.5) -> Parameter:
    return Parameter(rng.normal(shape, std=std), name="leaf")


def _scalarize(out: Tensor, w: np.ndarray) -> Tensor:
    return ops.sum_all(ops.mul(out, Tensor(w)))


def op_cases():
    def matmul_case(rng):
        a = _leaf(rng.child(0), (3, 4))
        b = _leaf(rng.child(1), (4, 2))
        w = _loss_weights(rng.child(2), (3, 2))
        return [a, b], lambda: _scalarize(ops.matmul(a, b), w)

    def matmul_batched_case(rng):
        a = _leaf(rng.child(0), (2, 3, 4))
        b = _leaf(rng.child(1), (2, 4, 2))
        w = _loss_weights(rng.child(2), (2, 3, 2))
        return [a, b], lambda: _scalarize(ops.matmul(a, b), w)

    def vector_matmul_case(rng):
        a = _leaf(rng.child(0), (4,))
        b = _leaf(rng.child(1), (4, 3))
        w = _loss_weights(rng.child(2), (3,))
        return [a, b], lambda: _scalarize(ops.matmul(a, b), w)

    def add_broadcast_case(rng):
        a = _leaf(rng.child(0), (3, 4))
        b = _leaf(rng.child(1), (4,))
        w = _loss_weights(rng.child(2), (3, 4))
        return [a, b], lambda: _scalarize(ops.add(a, b), w)

    def mul_case(rng):
        a = _leaf(rng.child(0), (2, 3))
        b = _leaf(rng.child(1), (2, 3))
        w = _loss_weights(rng.child(2), (2, 3))
        return [a, b], lambda: _scalarize(ops.mul(a, b), w)

    def sub_scale_case(rng):
        a = _leaf(rng.child(0), (5,))
        b = _leaf(rng.child(1), (5,))
        w = _loss_weights(rng.child(2), (5,))
        return [a, b], lambda: _scalarize(ops.sub(ops.scale(a, 1.7), b), w)

    def softmax_case(rng):
        a = _leaf(rng.child(0), (3, 5), std=1.0)
        w = _loss_weights(rng.child(1), (3, 5))
        return [a], lambda: _scalarize(ops.softmax(a, axis=-1), w)

    def log_softmax_case(rng):
        a = _leaf(rng.child(0), (2, 5), std=1.0)
        w = _loss_weights(rng.child(1), (2, 5))
        return [a], lambda: _scalarize(ops.log_softmax(a, axis=-1), w)

    def layer_norm_case(rng):
        x = _leaf(rng.child(0), (3, 5))
        gain = _leaf(rng.child(1), (5,))
        bias = _leaf(rng.child(2), (5,))
        w = _loss_weights(rng.child(3), (3, 5))
        return [x, gain, bias], lambda: _scalarize(ops.layer_norm(x, gain, bias), w)

    def gelu_case(rng):
        a = _leaf(rng.child(0), (4, 3), std=1.0)
        w = _loss_weights(rng.child(1), (4, 3))
        return [a], lambda: _scalarize(ops.gelu(a), w)

    def tanh_case(rng):
        a = _leaf(rng.child(0), (2, 4))
        w = _loss_weights(rng.child(1), (2, 4))
        return [a], lambda: _scalarize(ops.tanh(a), w)

    def relu_case(rng):
        a = _leaf(rng.child(0), (3, 3), std=1.0)
        # keep values away from the kink where central differences are invalid
        a.data[np.abs(a.data) < 0.05] += 0.1
        w = _loss_weights(rng.child(1), (3, 3))
        return [a], lambda: _scalarize(ops.relu(a), w)

    def embedding_case(rng):
        table = _leaf(rng.child(0), (5, 4))
        ids = np.array([0, 3, 3, 1])
        w = _loss_weights(rng.child(1), (4, 4))
        return [table], lambda: _scalarize(ops.embedding(table, ids), w)

    def concat_case(rng):
        a = _leaf(rng.child(0), (2, 3))
        b = _leaf(rng.child(1), (4, 3))
        w = _loss_weights(rng.child(2), (6, 3))
        return [a, b], lambda: _scalarize(ops.concat([a, b], axis=0), w)

    def slice_row_case(rng):
        a = _leaf(rng.child(0), (5, 3))
        w1 = _loss_weights(rng.child(1), (2, 3))
        w2 = _loss_weights(rng.child(2), (3,))
        return [a], lambda: ops.add(
            _scalarize(ops.slice_rows(a, 1, 3), w1), _scalarize(ops.row(a, -1), w2)
        )

    def transpose_reshape_case(rng):
        a = _leaf(rng.child(0), (2, 3, 4))
        w = _loss_weights(rng.child(1), (3, 8))
        return [a], lambda: _scalarize(
            ops.reshape(ops.transpose(a, (1, 0, 2)), (3, 8)), w
        )

    def mean_case(rng):
        a = _leaf(rng.child(0), (3, 4))
        return [a], lambda: ops.mean_all(a)

    def cross_entropy_case(rng):
        logits = _leaf(rng.child(0), (4, 5), std=1.0)
        targets = np.array([1, 0, 4, 2])
        mask = np.array([False, False, False, True])
        return [logits], lambda: ops.cross_entropy(logits, targets, pad_mask=mask)

    def bce_case(rng):
        logits = _leaf(rng.child(0), (2,), std=1.0)
        return [logits], lambda: ops.binary_cross_entropy_logits(logits, 1)

    def gumbel_soft_case(rng):
        # fixed noise (rng=None) keeps the relaxation differentiable-smooth
        logits = _leaf(rng.child(0), (5,), std=1.0)
        w = _loss_weights(rng.child(1), (5,))
        return [logits], lambda: _scalarize(
            ops.gumbel_softmax(logits, 0.7, None, straight_through=False), w
        )

    def dropout_scaling_case(rng):
        # fixed mask via a fixed seed: gradient is mask/(1-p) elementwise
        a = _leaf(rng.child(0), (4, 4))
        w = _loss_weights(rng.child(1), (4, 4))
        seed = rng.child(2).choice_index(10_000)
        return [a], lambda: _scalarize(
            ops.dropout(a, 0.4, Rng(seed), training=True), w
        )

    def linear_case(rng):
        x = _leaf(rng.child(0), (3, 4))
        w_p = _leaf(rng.child(1), (4, 2))
        b = _leaf(rng.child(2), (2,))
        w = _loss_weights(rng.child(3), (3, 2))
        return [x, w_p, b], lambda: _scalarize(ops.linear(x, w_p, b), w)

    return {
        "matmul": matmul_case,
        "matmul_batched": matmul_batched_case,
        "vector_matmul": vector_matmul_case,
        "add_broadcast": add_broadcast_case,
        "mul": mul_case,
        "sub_scale": sub_scale_case,
        "softmax": softmax_case,
        "log_softmax": log_softmax_case,
        "layer_norm": layer_norm_case,
        "gelu": gelu_case,
        "tanh": tanh_case,
        "relu": relu_case,
        "embedding": embedding_case,
        "concat": concat_case,
        "slice_row": slice_row_case,
        "transpose_reshape": transpose_reshape_case,
        "mean": mean_case,
        "cross_entropy": cross_entropy_case,
        "binary_cross_entropy": bce_case,
        "gumbel_softmax_soft": gumbel_soft_case,
        "dropout": dropout_scaling_case,
        "linear": linear_case,
    }


@pytest.mark.parametrize("name", sorted(op_cases()))
def test_gradients_match_finite_differences(name):
    check_gradients(op_cases()[name])


def test_attention_block_end_to_end():
    """Composite check through a full attention computation."""

    def build(rng):
        q_in = _leaf(rng.child(0), (3, 4))
        k_in = _leaf(rng.child(1), (5, 4))
        w = _loss_weights(rng.child(2), (3, 4))

        def forward():
            scores = ops.scale(ops.matmul(q_in, ops.transpose(k_in, (1, 0))), 0.5)
            attn = ops.softmax(scores, axis=-1)
            return _scalarize(ops.matmul(attn, k_in), w)

        return [q_in, k_in], forward

    check_gradients(build, seeds=range(5))
