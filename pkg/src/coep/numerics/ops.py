"""Differentiable operations over :class:`~coep.numerics.tensor.Tensor`.

Forward math runs in float32; reductions (sums, means, normalizer terms)
accumulate in float64 and cast the result back.  Every op registers a
backward closure via :func:`~coep.numerics.tensor.record`, so any scalar
built from these ops can be differentiated with ``backward(loss)``.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .rng import Rng
from .tensor import NumericError, Tensor, record

_GELU_A = np.float32(np.sqrt(2.0 / np.pi))
_GELU_B = np.float32(0.044715)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float32))


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.astype(np.float32, copy=False)


# -- arithmetic ---------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data + b.data)

    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g, b.data.shape))

    return record(out, (a, b), bwd)


def sub(a, b) -> Tensor:
    return add(a, scale(_as_tensor(b), -1.0))


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data * b.data)

    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g * a.data, b.data.shape))

    return record(out, (a, b), bwd)


def scale(a: Tensor, s: float) -> Tensor:
    s32 = np.float32(s)
    out = Tensor(a.data * s32)

    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate_grad(g * s32)

    return record(out, (a,), bwd)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product for 2-D operands or stacked 3-D batches.

    1-D ``a`` is treated as a row vector against 2-D ``b`` (vector-matrix
    product returning 1-D), which is what the soft-embedding path needs.
    """
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.shape[-1] != b.data.shape[-2 if b.ndim > 1 else 0]:
        raise NumericError(
            f"matmul inner dimensions disagree: {a.data.shape} x {b.data.shape}"
        )
    out = Tensor(a.data @ b.data)

    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            if b.ndim == 1:
                ga = np.outer(g, b.data) if a.ndim == 2 else g * b.data
            else:
                ga = g @ b.data.swapaxes(-1, -2) if a.ndim > 1 else g @ b.data.T
            a.accumulate_grad(_unbroadcast(np.asarray(ga, dtype=np.float32), a.data.shape))
        if b.requires_grad:
            if a.ndim == 1:
                gb = np.outer(a.data, g) if b.ndim == 2 else a.data * g
            else:
                gb = a.data.swapaxes(-1, -2) @ g
            b.accumulate_grad(_unbroadcast(np.asarray(gb, dtype=np.float32), b.data.shape))

    return record(out, (a, b), bwd)


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x @ w + b with bias broadcast over leading dims."""
    return add(matmul(x, w), b)


# -- shape manipulation -------------------------------------------------------


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    out = Tensor(a.data.reshape(shape))

    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate_grad(g.reshape(a.data.shape))

    return record(out, (a,), bwd)


def transpose(a: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inv = tuple(sorted(range(len(axes)), key=axes.__getitem__))
    out = Tensor(a.data.transpose(axes))

    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate_grad(np.ascontiguousarray(g.transpose(inv)))

    return record(out, (a,), bwd)


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    out = Tensor(np.concatenate([p.data for p in parts], axis=axis))
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def bwd(g: np.ndarray) -> None:
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                p.accumulate_grad(np.ascontiguousarray(g[tuple(idx)]))

    return record(out, tuple(parts), bwd)


def stack_rows(vectors: Sequence[Tensor]) -> Tensor:
    """Stack 1-D vectors of equal length into a matrix, one per row."""
    return concat([reshape(v, (1, v.size)) for v in vectors], axis=0)


def slice_rows(a: Tensor, start: int, stop: int) -> Tensor:
    out = Tensor(a.data[start:stop].copy())

    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            full = np.zeros_like(a.data)
            full[start:stop] = g
            a.accumulate_grad(full)

    return record(out, (a,), bwd)


def row(a: Tensor, index: int) -> Tensor:
    """Extract row ``index`` of a 2-D tensor as a 1-D vector."""
    if index < 0:
        index += a.data.shape[0]
    out = Tensor(a.data[index].copy())

    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            full = np.zeros_like(a.data)
            full[index] = g
            a.accumulate_grad(full)

    return record(out, (a,), bwd)


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Gather rows of ``table`` (the [V, d] embedding matrix) by token id."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.data.shape[0]):
        raise NumericError(
            f"token id out of range [0, {table.data.shape[0]}): {ids.min()}..{ids.max()}"
        )
    out = Tensor(table.data[ids])

    def bwd(g: np.ndarray) -> None:
        if table.requires_grad:
            full = np.zeros_like(table.data)
            np.add.at(full, ids, g)
            table.accumulate_grad(full)

    return record(out, (table,), bwd)


# -- nonlinearities -----------------------------------------------------------


def relu(a: Tensor) -> Tensor:
    out = Tensor(np.maximum(a.data, 0.0))

    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate_grad(g * (a.data > 0))

    return record(out, (a,), bwd)


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.data)
    out = Tensor(t)

    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate_grad(g * (1.0 - t * t))

    return record(out, (a,), bwd)


def gelu(a: Tensor) -> Tensor:
    """Gaussian error linear unit, tanh approximation."""
    x = a.data
    inner = _GELU_A * (x + _GELU_B * x * x * x)
    t = np.tanh(inner)
    out = Tensor(0.5 * x * (1.0 + t))

    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            dinner = _GELU_A * (1.0 + 3.0 * _GELU_B * x * x)
            da = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner
            a.accumulate_grad(g * da.astype(np.float32))

    return record(out, (a,), bwd)


def dropout(a: Tensor, p: float, rng: Rng, training: bool) -> Tensor:
    """Inverted dropout; identity when not training or p == 0."""
    if not training or p <= 0.0:
        return a
    keep = (rng.uniform(a.data.shape) >= p).astype(np.float32) / np.float32(1.0 - p)
    out = Tensor(a.data * keep)

    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate_grad(g * keep)

    return record(out, (a,), bwd)


# -- normalization ------------------------------------------------------------


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Numerically stabilized softmax along ``axis``.

    -inf entries (attention masks) come out as exact zeros; NaN input is
    rejected.
    """
    x = a.data
    if np.isnan(x).any():
        raise NumericError("softmax input contains NaN")
    m = x.max(axis=axis, keepdims=True)
    e = np.exp(x - m)
    denom = e.sum(axis=axis, keepdims=True, dtype=np.float64)
    y = (e / denom).astype(np.float32)
    out = Tensor(y)

    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            gy = g * y
            a.accumulate_grad(gy - y * gy.sum(axis=axis, keepdims=True))

    return record(out, (a,), bwd)


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    x = a.data
    if np.isnan(x).any():
        raise NumericError("log_softmax input contains NaN")
    m = np.max(x, axis=axis, keepdims=True)
    e = np.exp(x - m)
    lse = m + np.log(np.sum(e, axis=axis, keepdims=True, dtype=np.float64)).astype(np.float32)
    out = Tensor(x - lse)
    sm = np.exp(out.data)

    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate_grad(g - sm * g.sum(axis=axis, keepdims=True))

    return record(out, (a,), bwd)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    d = x.data.shape[-1]
    x64 = x.data.astype(np.float64)
    mu = x64.sum(axis=-1, keepdims=True) * (1.0 / d)
    centered = x64 - mu
    var = (centered * centered).sum(axis=-1, keepdims=True) * (1.0 / d)
    inv = (1.0 / np.sqrt(var + eps)).astype(np.float32)
    xhat = (centered * inv).astype(np.float32)
    out = Tensor(xhat * gain.data + bias.data)

    def bwd(g: np.ndarray) -> None:
        if bias.requires_grad:
            bias.accumulate_grad(_unbroadcast(g, bias.data.shape))
        if gain.requires_grad:
            gain.accumulate_grad(_unbroadcast(g * xhat, gain.data.shape))
        if x.requires_grad:
            gx = g * gain.data
            term2 = gx.sum(axis=-1, keepdims=True) * (1.0 / d)
            term3 = xhat * ((gx * xhat).sum(axis=-1, keepdims=True) * (1.0 / d))
            x.accumulate_grad(((gx - term2 - term3) * inv).astype(np.float32))

    return record(out, (x, gain, bias), bwd)


# -- reductions ---------------------------------------------------------------


def sum_all(a: Tensor) -> Tensor:
    out = Tensor(np.sum(a.data, dtype=np.float64))

    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate_grad(np.full_like(a.data, float(g)))

    return record(out, (a,), bwd)


def mean_all(a: Tensor) -> Tensor:
    n = a.data.size
    out = Tensor(np.sum(a.data, dtype=np.float64) / n)

    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate_grad(np.full_like(a.data, float(g) / n))

    return record(out, (a,), bwd)


def mean_of(parts: Sequence[Tensor]) -> Tensor:
    """Mean of scalar tensors (loss averaging across a batch)."""
    if not parts:
        raise NumericError("mean_of() needs at least one term")
    total = parts[0]
    for p in parts[1:]:
        total = add(total, p)
    return scale(total, 1.0 / len(parts))


# -- losses -------------------------------------------------------------------


def cross_entropy(
    logits: Tensor, targets: np.ndarray, pad_mask: Optional[np.ndarray] = None
) -> Tensor:
    """Mean negative log-likelihood of ``targets`` under ``logits``.

    ``logits`` is [T, V]; ``targets`` holds T token ids; ``pad_mask`` (when
    given) marks padding positions that are excluded from the mean.
    """
    targets = np.asarray(targets, dtype=np.int64)
    if logits.ndim != 2 or targets.shape != (logits.data.shape[0],):
        raise NumericError(
            f"cross_entropy expects [T, V] logits and T targets, got "
            f"{logits.data.shape} and {targets.shape}"
        )
    V = logits.data.shape[1]
    if targets.size and (targets.min() < 0 or targets.max() >= V):
        raise NumericError(f"target id out of range [0, {V})")
    counted = np.ones(targets.shape, dtype=bool)
    if pad_mask is not None:
        counted = ~np.asarray(pad_mask, dtype=bool)
    n = int(counted.sum())
    if n == 0:
        raise NumericError("cross_entropy has no unmasked positions")

    x = logits.data.astype(np.float64)
    m = x.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(x - m).sum(axis=1))
    nll = lse - x[np.arange(targets.size), targets]
    out = Tensor(nll[counted].sum() / n)

    sm = np.exp(x - lse[:, None]).astype(np.float32)

    def bwd(g: np.ndarray) -> None:
        if logits.requires_grad:
            grad = sm.copy()
            grad[np.arange(targets.size), targets] -= 1.0
            grad[~counted] = 0.0
            logits.accumulate_grad(grad * (float(g) / n))

    return record(out, (logits,), bwd)


def binary_cross_entropy_logits(logits: Tensor, label: int) -> Tensor:
    """NLL of ``label`` under a 2-way softmax over ``logits`` (shape [2])."""
    if logits.data.shape != (2,):
        raise NumericError(f"expected binary logits of shape (2,), got {logits.data.shape}")
    if label not in (0, 1):
        raise NumericError(f"label must be 0 or 1, got {label}")
    return cross_entropy(reshape(logits, (1, 2)), np.array([label]))


# -- stochastic relaxation ----------------------------------------------------


def gumbel_softmax(
    logits: Tensor,
    temperature: float,
    rng: Optional[Rng],
    straight_through: bool = False,
) -> Tensor:
    """Gumbel-Softmax sample over 1-D ``logits``.

    The soft sample is ``softmax((logits + g) / temperature)`` with
    ``g ~ Gumbel(0, 1)``.  With ``straight_through`` the forward value is the
    exact one-hot at the sample's argmax while the backward rule is the soft
    sample's; without it the relaxed distribution itself is returned.
    ``rng=None`` zeroes the noise, giving the deterministic relaxation
    (useful for limit checks).
    """
    if temperature <= 0.0:
        raise NumericError(f"temperature must be > 0, got {temperature}")
    if logits.ndim != 1:
        raise NumericError(f"gumbel_softmax expects 1-D logits, got {logits.data.shape}")
    g = rng.gumbel(logits.data.shape) if rng is not None else np.zeros(logits.data.shape)
    z = (logits.data.astype(np.float64) + g) / temperature
    z -= z.max()
    e = np.exp(z)
    y = (e / e.sum()).astype(np.float32)
    if straight_through:
        hard = np.zeros_like(y)
        hard[int(np.argmax(y))] = 1.0
        out = Tensor(hard)
    else:
        out = Tensor(y)

    def bwd(grad: np.ndarray) -> None:
        if logits.requires_grad:
            gy = grad * y
            logits.accumulate_grad((gy - y * gy.sum()) / np.float32(temperature))

    return record(out, (logits,), bwd)
