"""Autoregressive decoding and the two inference tasks.

Top-k decoding filters each step to the k highest logits, renormalizes, and
samples; greedy is the k-free argmax path.  Both stop at the ending token or
at the length cap.  A decode that stops immediately is replaced by the single
highest-probability non-special token so downstream consumers never see an
empty event.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .corpus import Relation, Vocab, build_gm_input
from .corpus.vocab import BOS_ID, EOS_ID, PAD_ID, UNK_ID
from .gm import build_memory, collect_prompt_set
from .numerics import Rng, Tensor, no_grad
from .seq2seq import ContractError, IncrementalDecoder, Seq2SeqModel

log = logging.getLogger(__name__)

# <s>, <pad>, <unk> never appear in generated text; </s> terminates it.
_BANNED_IDS = (BOS_ID, PAD_ID, UNK_ID)


@dataclass
class DecodeConfig:
    strategy: str = "topk"
    k: int = 4
    max_len: int = 24
    seed: int = 0
    temperature: float = 1.0  # logit divisor

    def __post_init__(self):
        if self.strategy not in ("greedy", "topk"):
            raise ValueError(f"unknown decode strategy {self.strategy!r}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.max_len < 1:
            raise ValueError(f"max_len must be >= 1, got {self.max_len}")


def _step_choice(
    logits: np.ndarray, config: DecodeConfig, rng: Optional[Rng], trace: Optional[list]
) -> int:
    """Pick one token id from a step's logits."""
    z = logits.astype(np.float64) / config.temperature
    z[list(_BANNED_IDS)] = -np.inf
    if config.strategy == "greedy":
        return int(np.argmax(z))
    k = min(config.k, z.size - len(_BANNED_IDS))
    order = np.argsort(-z, kind="stable")[:k]
    zk = z[order]
    zk -= zk.max()
    probs = np.exp(zk)
    probs /= probs.sum()
    u = float(rng.uniform())
    choice = int(order[np.searchsorted(np.cumsum(probs), u, side="right").clip(0, k - 1)])
    if trace is not None:
        trace.append({"topk_ids": order.tolist(), "probs": probs.tolist(), "chosen": choice})
    return choice


def decode(
    model: Seq2SeqModel,
    memory: Tensor,
    config: DecodeConfig,
    rng: Optional[Rng] = None,
    trace: Optional[list] = None,
) -> list[int]:
    """Generate token ids from a memory until the ending token or max_len."""
    if memory is None or memory.data.shape[0] == 0:
        raise ContractError("decode needs a nonempty memory")
    if rng is None:
        rng = Rng(config.seed)
    was_training = model.training
    model.eval()
    first_logits: Optional[np.ndarray] = None
    out: list[int] = []
    try:
        with no_grad():
            stepper = IncrementalDecoder(model, memory)
            token = BOS_ID
            for _ in range(config.max_len):
                logits = stepper.step(token)
                if first_logits is None:
                    first_logits = logits.copy()
                token = _step_choice(logits, config, rng, trace)
                if token == EOS_ID:
                    break
                out.append(token)
    finally:
        model.train(was_training)
    if not out and first_logits is not None:
        z = first_logits.astype(np.float64)
        z[list(_BANNED_IDS) + [EOS_ID]] = -np.inf
        out = [int(np.argmax(z))]
    return out


def generate_future_event(
    im_model: Optional[Seq2SeqModel],
    gm_model: Seq2SeqModel,
    vocab: Vocab,
    history: Sequence[str],
    current: str,
    config: DecodeConfig,
    relations: Optional[Sequence[Relation]] = None,
    rng: Optional[Rng] = None,
) -> str:
    """Build the prompted memory for (history, current) and decode one event.

    ``im_model=None`` (or an empty relation list) generates from the context
    encoding alone.
    """
    was_im = im_model.training if im_model is not None else False
    was_gm = gm_model.training
    if im_model is not None:
        im_model.eval()
    gm_model.eval()
    try:
        with no_grad():
            x_ids = build_gm_input(vocab, list(history), current)
            enc = gm_model.encode(x_ids)
            prompts = None
            if im_model is not None and (relations is None or len(relations) > 0):
                prompts = collect_prompt_set(im_model, x_ids, vocab, relations)
            memory = build_memory(prompts, enc)
            ids = decode(gm_model, memory, config, rng)
    finally:
        if im_model is not None:
            im_model.train(was_im)
        gm_model.train(was_gm)
    return vocab.decode(ids)


def tell_story(
    im_model: Optional[Seq2SeqModel],
    gm_model: Seq2SeqModel,
    vocab: Vocab,
    first_event: str,
    steps: int = 4,
    config: DecodeConfig = None,
    relations: Optional[Sequence[Relation]] = None,
    rng: Optional[Rng] = None,
) -> list[str]:
    """Recurrently extend a start event; returns [start, e_1, ..., e_steps].

    Each generated event is re-tokenized and appended to the history for the
    next step.
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    config = config or DecodeConfig()
    events = [first_event]
    history: list[str] = []
    current = first_event
    for _ in range(steps):
        nxt = generate_future_event(
            im_model, gm_model, vocab, history, current, config, relations, rng
        )
        events.append(nxt)
        history.append(current)
        current = nxt
    return events
