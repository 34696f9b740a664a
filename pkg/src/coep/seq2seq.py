"""Transformer encoder-decoder with LM and sequence-classification heads.

The architecture mirrors the usual encoder-decoder layout (post-norm residual
blocks, learned positional embeddings, gelu feed-forward, causal decoder
self-attention, full cross-attention) at desk scale.  Reference-scale models
of this family run 6 layers / 768 hidden / 12 heads; the default here is
2 / 64 / 4 and trains from random initialization, so all signal comes from
the bundled corpora.

The LM head weight is tied to the token embedding (transposed); its bias is
free.  The classification head is a two-layer tanh projection reading the
top decoder state at the final ending token.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .corpus.vocab import BOS_ID, EOS_ID
from .numerics import Parameter, Rng, Tensor, no_grad
from .numerics import ops

log = logging.getLogger(__name__)

NEG_INF = np.float32(-np.inf)


class ContractError(ValueError):
    """A caller violated an interface precondition (empty memory, bad start)."""


@dataclass
class ModelConfig:
    vocab_size: int
    num_layers: int = 2
    d_model: int = 64
    num_heads: int = 4
    ffn_dim: int = 256
    max_positions: int = 128
    dropout: float = 0.1

    def __post_init__(self):
        if self.d_model % self.num_heads != 0:
            raise ValueError(
                f"d_model={self.d_model} not divisible by num_heads={self.num_heads}"
            )

    @property
    def head_dim(self) -> int:
        return self.d_model // self.num_heads

    def param_count(self) -> int:
        """Closed-form parameter count.

        embedding: V*d + P*d + 2d (token, positions, embed norm)
        encoder layer: 4(d^2+d) attn + 2d norm + 2df+f+d ffn + 2d norm
        decoder layer: adds a second attention block and norm
        lm head: V (bias only; weight tied to the token embedding)
        cls head: d^2 + d + 2d + 2
        """
        d, f, v, p = self.d_model, self.ffn_dim, self.vocab_size, self.max_positions
        enc_layer = 4 * d * d + 2 * d * f + 9 * d + f
        dec_layer = 8 * d * d + 2 * d * f + 15 * d + f
        return (
            v * d + p * d + 2 * d
            + self.num_layers * (enc_layer + dec_layer)
            + v
            + d * d + 3 * d + 2
        )

    def to_dict(self) -> dict:
        return {
            "vocab_size": self.vocab_size,
            "num_layers": self.num_layers,
            "d_model": self.d_model,
            "num_heads": self.num_heads,
            "ffn_dim": self.ffn_dim,
            "max_positions": self.max_positions,
            "dropout": self.dropout,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


@dataclass
class EncoderState:
    hidden: Tensor  # [L, d_model]
    token_ids: tuple[int, ...]
    segments: tuple[tuple[int, int], ...]  # (start, end) index pairs


@dataclass
class DecoderState:
    hidden: Tensor  # [T, d_model] from the top decoder layer
    token_ids: tuple[int, ...]


def segment_spans(ids: Sequence[int]) -> tuple[tuple[int, int], ...]:
    """(start, end) spans of <s>...</s> segments within an id sequence."""
    spans = []
    start = None
    for i, t in enumerate(ids):
        if t == BOS_ID and start is None:
            start = i
        elif t == EOS_ID and start is not None:
            spans.append((start, i + 1))
            start = None
    return tuple(spans)


def truncate_left_of_first_segment(ids: Sequence[int], max_len: int) -> list[int]:
    """Drop tokens from the left interior of the first segment until it fits.

    The first segment holds history/background; later segments (the current
    event, the relation phrase) stay intact.
    """
    ids = list(ids)
    if len(ids) <= max_len:
        return ids
    log.warning("input length %d exceeds %d; truncating history", len(ids), max_len)
    while len(ids) > max_len and len(ids) > 2 and ids[1] not in (EOS_ID,):
        del ids[1]
    del ids[max_len:]  # degenerate fallback when one segment cannot absorb it
    return ids


class Seq2SeqModel:
    """One encoder-decoder instance (used for both pipeline modules)."""

    def __init__(self, config: ModelConfig, rng: Rng):
        self.config = config
        self._rng = rng
        self.training = True
        self.trace_attention = False
        self.attention_trace: list[tuple[str, np.ndarray]] = []
        self.p: dict[str, Parameter] = {}
        self._build(rng.child(0))

    # -- construction ---------------------------------------------------------

    def _add(self, name: str, shape: tuple[int, ...], init: str, rng: Rng) -> None:
        if init == "normal":
            data = rng.normal(shape, std=0.02)
        elif init == "zeros":
            data = np.zeros(shape, dtype=np.float32)
        elif init == "ones":
            data = np.ones(shape, dtype=np.float32)
        else:  # pragma: no cover
            raise ValueError(init)
        self.p[name] = Parameter(data, name=name)

    def _add_norm(self, prefix: str, rng: Rng) -> None:
        d = self.config.d_model
        self._add(f"{prefix}.gain", (d,), "ones", rng)
        self._add(f"{prefix}.bias", (d,), "zeros", rng)

    def _add_attention(self, prefix: str, rng: Rng) -> None:
        d = self.config.d_model
        for part in ("wq", "wk", "wv", "wo"):
            self._add(f"{prefix}.{part}", (d, d), "normal", rng)
        for part in ("bq", "bk", "bv", "bo"):
            self._add(f"{prefix}.{part}", (d,), "zeros", rng)

    def _add_ffn(self, prefix: str, rng: Rng) -> None:
        d, f = self.config.d_model, self.config.ffn_dim
        self._add(f"{prefix}.w1", (d, f), "normal", rng)
        self._add(f"{prefix}.b1", (f,), "zeros", rng)
        self._add(f"{prefix}.w2", (f, d), "normal", rng)
        self._add(f"{prefix}.b2", (d,), "zeros", rng)

    def _build(self, rng: Rng) -> None:
        c = self.config
        self._add("embedding.token", (c.vocab_size, c.d_model), "normal", rng.child(1))
        self._add("embedding.pos", (c.max_positions, c.d_model), "normal", rng.child(2))
        self._add_norm("embedding.norm", rng)
        for i in range(c.num_layers):
            r = rng.child(10 + i)
            self._add_attention(f"encoder.{i}.attn", r)
            self._add_norm(f"encoder.{i}.attn_norm", r)
            self._add_ffn(f"encoder.{i}.ffn", r)
            self._add_norm(f"encoder.{i}.ffn_norm", r)
        for i in range(c.num_layers):
            r = rng.child(100 + i)
            self._add_attention(f"decoder.{i}.self_attn", r)
            self._add_norm(f"decoder.{i}.self_norm", r)
            self._add_attention(f"decoder.{i}.cross_attn", r)
            self._add_norm(f"decoder.{i}.cross_norm", r)
            self._add_ffn(f"decoder.{i}.ffn", r)
            self._add_norm(f"decoder.{i}.ffn_norm", r)
        self._add("lm_head.bias", (c.vocab_size,), "zeros", rng.child(200))
        r = rng.child(201)
        self._add("cls_head.dense.w", (c.d_model, c.d_model), "normal", r)
        self._add("cls_head.dense.b", (c.d_model,), "zeros", r)
        self._add("cls_head.out.w", (c.d_model, 2), "normal", r)
        self._add("cls_head.out.b", (2,), "zeros", r)

    # -- bookkeeping ------------------------------------------------------------

    def parameters(self) -> dict[str, Parameter]:
        return self.p

    def train(self, flag: bool = True) -> "Seq2SeqModel":
        self.training = flag
        return self

    def eval(self) -> "Seq2SeqModel":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.p.values():
            p.grad = None

    def param_count(self) -> int:
        return sum(p.size for p in self.p.values())

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.p.items()}

    def load_snapshot(self, state: dict[str, np.ndarray]) -> None:
        for name, p in self.p.items():
            if name not in state:
                raise KeyError(f"missing parameter in state: {name}")
            if state[name].shape != p.data.shape:
                raise ValueError(
                    f"shape mismatch for {name}: {state[name].shape} vs {p.data.shape}"
                )
            p.data = state[name].astype(np.float32).copy()

    # -- shared blocks ------------------------------------------------------------

    def _norm(self, prefix: str, x: Tensor) -> Tensor:
        return ops.layer_norm(x, self.p[f"{prefix}.gain"], self.p[f"{prefix}.bias"])

    def _dropout(self, x: Tensor) -> Tensor:
        return ops.dropout(x, self.config.dropout, self._rng, self.training)

    def _embed_rows(self, token_rows: Tensor, start_pos: int = 0) -> Tensor:
        """Add positional embedding and embedding norm to token rows [T, d]."""
        T = token_rows.data.shape[0]
        pos = ops.slice_rows(self.p["embedding.pos"], start_pos, start_pos + T)
        return self._dropout(self._norm("embedding.norm", ops.add(token_rows, pos)))

    def _attention(
        self,
        prefix: str,
        query_x: Tensor,
        kv_x: Tensor,
        mask: Optional[np.ndarray],
        kind: str,
    ) -> Tensor:
        c = self.config
        H, dh = c.num_heads, c.head_dim
        T = query_x.data.shape[0]
        S = kv_x.data.shape[0]

        def split(x: Tensor, n: int) -> Tensor:
            return ops.transpose(ops.reshape(x, (n, H, dh)), (1, 0, 2))

        q = split(ops.linear(query_x, self.p[f"{prefix}.wq"], self.p[f"{prefix}.bq"]), T)
        k = split(ops.linear(kv_x, self.p[f"{prefix}.wk"], self.p[f"{prefix}.bk"]), S)
        v = split(ops.linear(kv_x, self.p[f"{prefix}.wv"], self.p[f"{prefix}.bv"]), S)
        scores = ops.scale(ops.matmul(q, ops.transpose(k, (0, 2, 1))), 1.0 / np.sqrt(dh))
        if mask is not None:
            scores = ops.add(scores, Tensor(mask))
        attn = ops.softmax(scores, axis=-1)
        if self.trace_attention:
            self.attention_trace.append((kind, attn.data.copy()))
        attn = self._dropout(attn)
        ctx = ops.reshape(ops.transpose(ops.matmul(attn, v), (1, 0, 2)), (T, c.d_model))
        return ops.linear(ctx, self.p[f"{prefix}.wo"], self.p[f"{prefix}.bo"])

    def _ffn(self, prefix: str, x: Tensor) -> Tensor:
        h = ops.gelu(ops.linear(x, self.p[f"{prefix}.w1"], self.p[f"{prefix}.b1"]))
        return ops.linear(h, self.p[f"{prefix}.w2"], self.p[f"{prefix}.b2"])

    # -- encoder ------------------------------------------------------------------

    def encode(self, token_ids: Sequence[int]) -> EncoderState:
        """One hidden vector per input token; deterministic in eval mode."""
        ids = truncate_left_of_first_segment(token_ids, self.config.max_positions)
        if not ids:
            raise ContractError("cannot encode an empty token sequence")
        x = self._embed_rows(ops.embedding(self.p["embedding.token"], np.asarray(ids)))
        for i in range(self.config.num_layers):
            a = self._attention(f"encoder.{i}.attn", x, x, None, "enc_self")
            x = self._norm(f"encoder.{i}.attn_norm", ops.add(x, self._dropout(a)))
            f = self._ffn(f"encoder.{i}.ffn", x)
            x = self._norm(f"encoder.{i}.ffn_norm", ops.add(x, self._dropout(f)))
        return EncoderState(hidden=x, token_ids=tuple(ids), segments=segment_spans(ids))

    # -- decoder ------------------------------------------------------------------

    def _causal_mask(self, T: int) -> np.ndarray:
        mask = np.zeros((T, T), dtype=np.float32)
        mask[np.triu_indices(T, k=1)] = NEG_INF
        return mask

    def _decoder_layer(
        self, i: int, x: Tensor, kv: Tensor, memory: Tensor, mask: Optional[np.ndarray]
    ) -> Tensor:
        a = self._attention(f"decoder.{i}.self_attn", x, kv, mask, "dec_self")
        x = self._norm(f"decoder.{i}.self_norm", ops.add(x, self._dropout(a)))
        ca = self._attention(f"decoder.{i}.cross_attn", x, memory, None, "cross")
        x = self._norm(f"decoder.{i}.cross_norm", ops.add(x, self._dropout(ca)))
        f = self._ffn(f"decoder.{i}.ffn", x)
        return self._norm(f"decoder.{i}.ffn_norm", ops.add(x, self._dropout(f)))

    def decoder_states(
        self,
        memory: Tensor,
        prev_ids: Optional[Sequence[int]] = None,
        input_rows: Optional[Tensor] = None,
    ) -> Tensor:
        """Top-layer decoder states for teacher-forced inputs.

        Either ``prev_ids`` (token ids, first must be <s>) or ``input_rows``
        (pre-embedding token rows [T, d], the differentiable soft path) must
        be given.
        """
        if memory is None or memory.data.shape[0] == 0:
            raise ContractError("decoder memory must be nonempty")
        if input_rows is None:
            if prev_ids is None or len(prev_ids) == 0:
                raise ContractError("decoder needs a nonempty token prefix")
            if prev_ids[0] != BOS_ID:
                raise ContractError("decoder prefix must begin with the start token")
            input_rows = ops.embedding(self.p["embedding.token"], np.asarray(prev_ids))
        T = input_rows.data.shape[0]
        x = self._embed_rows(input_rows)
        mask = self._causal_mask(T)
        for i in range(self.config.num_layers):
            x = self._decoder_layer(i, x, x, memory, mask)
        return x

    def lm_logits(self, states: Tensor) -> Tensor:
        """Project decoder states to vocabulary logits with the tied embedding."""
        tied = ops.transpose(self.p["embedding.token"], (1, 0))
        return ops.add(ops.matmul(states, tied), self.p["lm_head.bias"])

    def decode_all_logits(self, prev_ids: Sequence[int], memory: Tensor) -> Tensor:
        return self.lm_logits(self.decoder_states(memory, prev_ids=prev_ids))

    def decode_logits(self, prev_ids: Sequence[int], memory: Tensor) -> Tensor:
        """Next-token logits after the given prefix."""
        return ops.row(self.decode_all_logits(prev_ids, memory), -1)

    # -- classification head --------------------------------------------------------

    def cls_logits(self, final_state: Tensor) -> Tensor:
        h = ops.tanh(
            ops.linear(final_state, self.p["cls_head.dense.w"], self.p["cls_head.dense.b"])
        )
        return ops.linear(h, self.p["cls_head.out.w"], self.p["cls_head.out.b"])

    def classify(self, x_ids: Sequence[int], y_ids: Sequence[int]) -> Tensor:
        """Binary logits for (input sequence, candidate text).

        The encoder reads x, the decoder reads <s> y </s>, and the head
        consumes the top decoder state at the final ending token.
        """
        if len(x_ids) == 0 or len(y_ids) == 0:
            raise ContractError("classify needs nonempty sequences")
        enc = self.encode(x_ids)
        states = self.decoder_states(enc.hidden, prev_ids=[BOS_ID, *y_ids, EOS_ID])
        return self.cls_logits(ops.row(states, -1))

    def classify_rows(self, memory: Tensor, input_rows: Tensor) -> Tensor:
        """Classification over pre-embedded decoder rows (soft-text scoring)."""
        states = self.decoder_states(memory, input_rows=input_rows)
        return self.cls_logits(ops.row(states, -1))

    def embed_tokens(self, ids: Sequence[int]) -> Tensor:
        """Raw token-embedding rows (no position, no norm)."""
        return ops.embedding(self.p["embedding.token"], np.asarray(ids))


class StepDecoder:
    """Step-wise decoder keeping per-layer input caches.

    Each call processes only the newest position: the query is the new row,
    keys/values come from every cached layer input, which reproduces the
    causal teacher-forced pass for that position.  Runs under whatever grad
    mode is active, so it serves both sampling (no_grad) and the
    differentiable decode path (graph references into the cache are kept
    alive across steps).
    """

    def __init__(self, model: Seq2SeqModel, memory: Tensor):
        if memory.data.shape[0] == 0:
            raise ContractError("decoder memory must be nonempty")
        self.model = model
        self.memory = memory
        self._layer_inputs: list[list[Tensor]] = [
            [] for _ in range(model.config.num_layers)
        ]
        self._pos = 0

    def step_rows(self, token_rows: Tensor) -> Tensor:
        """Feed one pre-embedding token row [1, d]; returns top state [1, d]."""
        m = self.model
        x = m._embed_rows(token_rows, start_pos=self._pos)
        for i in range(m.config.num_layers):
            cache = self._layer_inputs[i]
            cache.append(x)
            kv = x if len(cache) == 1 else ops.concat(cache, axis=0)
            x = m._decoder_layer(i, x, kv, self.memory, None)
        self._pos += 1
        return x


class IncrementalDecoder:
    """Eval-mode token-id front end over :class:`StepDecoder`."""

    def __init__(self, model: Seq2SeqModel, memory: Tensor):
        if model.training:
            raise ContractError("incremental decoding is an eval-mode path")
        self.model = model
        self._stepper = StepDecoder(model, memory)

    def step(self, token_id: int) -> np.ndarray:
        """Feed one token; returns next-token logits as a numpy array [V]."""
        m = self.model
        with no_grad():
            rows = ops.embedding(m.p["embedding.token"], np.asarray([token_id]))
            logits = m.lm_logits(self._stepper.step_rows(rows))
        return logits.data[-1].copy()
