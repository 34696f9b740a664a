"""Generation module: sequential fine-tuning and prompted future-event loss.

The module first fine-tunes on normalized sequential event pairs (generate
the future event from the preceding one).  For future-event generation it
consumes a prompted memory: nine relation-conditioned vectors collected from
the inference module's encoder, concatenated ahead of its own context
encoding, so the decoder cross-attends over both.  Prompt rows carry no
positional embedding; they are not tokens.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .corpus import (
    CANONICAL_RELATIONS,
    FegExample,
    Relation,
    SequentialPair,
    Vocab,
    build_gm_input,
    build_prompt_input,
    build_seq_input,
)
from .errors import DataError
from .im import lm_loss
from .losses import LossValue
from .numerics import Rng, Tensor, backward, no_grad
from .numerics import ops
from .seq2seq import EncoderState, Seq2SeqModel
from .training import TrainConfig, batches

log = logging.getLogger(__name__)


@dataclass
class PromptSet:
    """Ordered relation-conditioned prompt vectors (canonically nine)."""

    vectors: list[Tensor]
    relations: tuple[Relation, ...]

    def __post_init__(self):
        if len(self.vectors) != len(self.relations):
            raise ValueError("one prompt vector per relation required")
        for v in self.vectors:
            if not np.isfinite(v.data).all():
                raise ValueError("prompt vector contains non-finite values")

    def __len__(self) -> int:
        return len(self.vectors)


# -- sequential-KG fine-tuning --------------------------------------------------


def gm_seq_loss(model: Seq2SeqModel, pair: SequentialPair, vocab: Vocab) -> LossValue:
    """Teacher-forced NLL of the future event given the preceding event."""
    if not pair.future:
        raise DataError("sequential pair has an empty future event")
    x_ids = build_seq_input(vocab, pair.preceding)
    y_ids = vocab.encode(pair.future)
    return LossValue.from_components({"lm": lm_loss(model, x_ids, y_ids)})


def finetune_gm(
    model: Seq2SeqModel,
    pairs: Sequence[SequentialPair],
    vocab: Vocab,
    cfg: TrainConfig,
    rng: Rng,
) -> list[dict]:
    """Fine-tune on sequential pairs; returns per-step log records."""
    if not pairs:
        raise DataError("sequential corpus is empty")
    model.train(True)
    opt = cfg.optimizer(model.parameters().values())
    logs: list[dict] = []
    step = 0
    for epoch in range(cfg.epochs):
        for batch in batches(pairs, cfg.batch_size, rng.child(epoch)):
            parts = [gm_seq_loss(model, pair, vocab).total for pair in batch]
            loss = LossValue.from_components({"lm": ops.mean_of(parts)})
            backward(loss.total)
            opt.step()
            opt.zero_grad()
            step += 1
            logs.append(
                {"step": step, "epoch": epoch, "loss_lm": loss.value,
                 "loss_total": loss.value}
            )
            if cfg.max_steps and step >= cfg.max_steps:
                return logs
    return logs


# -- prompt collection -----------------------------------------------------------


def collect_prompt(
    im_model: Seq2SeqModel, x_g_ids: Sequence[int], relation: Relation, vocab: Vocab
) -> Tensor:
    """The inference-encoder hidden state at the final ending token of the
    prompt clarification input (generation input + relation segment)."""
    ids = build_prompt_input(vocab, x_g_ids, relation)
    enc = im_model.encode(ids)
    return ops.row(enc.hidden, -1)


def collect_prompt_set(
    im_model: Seq2SeqModel,
    x_g_ids: Sequence[int],
    vocab: Vocab,
    relations: Optional[Sequence[Relation]] = None,
) -> PromptSet:
    """Prompts for all requested relations, canonical order by default.

    Passing a subset supports the per-relation ablations (a single-relation
    set yields a 1-vector prompt block).
    """
    rels = tuple(relations) if relations is not None else CANONICAL_RELATIONS
    vectors = [collect_prompt(im_model, x_g_ids, r, vocab) for r in rels]
    return PromptSet(vectors=vectors, relations=rels)


def build_memory(prompts: PromptSet | None, enc: EncoderState) -> Tensor:
    """Row-concatenate prompt vectors ahead of the context encoding.

    With no prompts (ablation) the memory is the context encoding itself.
    The result always has len(prompts) + L rows.
    """
    if prompts is None or len(prompts) == 0:
        return enc.hidden
    d = enc.hidden.data.shape[1]
    for v in prompts.vectors:
        if v.data.shape != (d,):
            raise ValueError(
                f"prompt dimension {v.data.shape} incompatible with d_model {d}"
            )
    memory = ops.concat([ops.stack_rows(prompts.vectors), enc.hidden], axis=0)
    assert memory.data.shape[0] == len(prompts) + enc.hidden.data.shape[0]
    return memory


# -- future-event-generation losses ----------------------------------------------


def feg_lm_loss(
    model: Seq2SeqModel, memory: Tensor, y_ids: Sequence[int]
) -> LossValue:
    """Teacher-forced NLL of the target future event over a prompted memory."""
    from .corpus.vocab import BOS_ID, EOS_ID

    if len(y_ids) == 0:
        raise DataError("future-event target must be nonempty")
    logits = model.decode_all_logits([BOS_ID, *y_ids], memory)
    targets = np.asarray([*y_ids, EOS_ID])
    return LossValue.from_components({"lm": ops.cross_entropy(logits, targets)})


def feg_cls_loss(
    model: Seq2SeqModel, x_g_ids: Sequence[int], y_ids: Sequence[int], label: int
) -> LossValue:
    """Binary consistency loss on the classification head (0 = true pair)."""
    logits = model.classify(x_g_ids, y_ids)
    return LossValue.from_components(
        {"cls": ops.binary_cross_entropy_logits(logits, label)}
    )


def gm_total_loss(lm: LossValue, cls: Optional[LossValue]) -> LossValue:
    """Combined generation loss; the cls-ablated variant is LM only."""
    components = {"lm": lm.components["lm"]}
    if cls is not None:
        components["cls"] = cls.components["cls"]
    return LossValue.from_components(components)


def encode_feg_input(
    model: Seq2SeqModel, example: FegExample, vocab: Vocab
) -> tuple[list[int], EncoderState]:
    x_ids = build_gm_input(vocab, example.history, example.current)
    return x_ids, model.encode(x_ids)
