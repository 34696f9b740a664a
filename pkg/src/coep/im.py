"""Inference module: explanation generation over inferential triples.

Fine-tuning combines teacher-forced language modeling on true (event,
relation) -> explanation pairs with a contrastive discriminator that scores
whether an explanation is consistent with its input (label 0 = consistent,
label 1 = mismatched).  Language-modeling loss is computed on true pairs
only; mismatched pairs would otherwise teach the decoder to produce the
wrong explanation.  Both objectives share all module parameters.
"""

from __future__ import annotations

import logging
from typing import Optional, Sequence

import numpy as np

from .corpus import (
    ImExample,
    InferentialTriple,
    Relation,
    Vocab,
    build_im_input,
    make_im_examples,
)
from .corpus.vocab import BOS_ID, EOS_ID
from .errors import DataError
from .losses import LossValue
from .numerics import Rng, Tensor, backward, no_grad
from .numerics import ops
from .seq2seq import ContractError, Seq2SeqModel
from .training import TrainConfig, batches

log = logging.getLogger(__name__)

CONSISTENT = 0
MISMATCHED = 1


def lm_loss(model: Seq2SeqModel, x_ids: Sequence[int], y_ids: Sequence[int]) -> Tensor:
    """Mean per-token NLL of the target, teacher forced, including the final
    ending token."""
    if len(y_ids) == 0:
        raise ContractError("language-modeling target must be nonempty")
    enc = model.encode(x_ids)
    logits = model.decode_all_logits([BOS_ID, *y_ids], enc.hidden)
    targets = np.asarray([*y_ids, EOS_ID])
    return ops.cross_entropy(logits, targets)


def im_lm_loss(model: Seq2SeqModel, x_ids, y_ids) -> LossValue:
    return LossValue.from_components({"lm": lm_loss(model, x_ids, y_ids)})


def im_disc_loss(model: Seq2SeqModel, example: ImExample) -> LossValue:
    """Binary cross entropy of the discriminator against the example label."""
    logits = model.classify(example.x_ids, example.y_ids)
    return LossValue.from_components(
        {"disc": ops.binary_cross_entropy_logits(logits, example.label)}
    )


def discriminator_score(model: Seq2SeqModel, x_ids, y_ids) -> float:
    """Probability that (input, explanation) is consistent (label 0)."""
    with no_grad():
        probs = ops.softmax(model.classify(x_ids, y_ids))
    return float(probs.data[CONSISTENT])


def batch_loss(model: Seq2SeqModel, batch: Sequence[ImExample]) -> LossValue:
    """Joint objective over one batch: LM on true pairs, discriminator on all."""
    lm_parts = [
        lm_loss(model, ex.x_ids, ex.y_ids) for ex in batch if ex.label == CONSISTENT
    ]
    disc_parts = [
        ops.binary_cross_entropy_logits(model.classify(ex.x_ids, ex.y_ids), ex.label)
        for ex in batch
    ]
    components = {}
    if lm_parts:
        components["lm"] = ops.mean_of(lm_parts)
    components["disc"] = ops.mean_of(disc_parts)
    return LossValue.from_components(components)


def finetune_im(
    model: Seq2SeqModel,
    triples: Sequence[InferentialTriple],
    vocab: Vocab,
    cfg: TrainConfig,
    rng: Rng,
) -> list[dict]:
    """Fine-tune on inferential triples; returns per-step log records.

    Negatives are resampled each epoch from epoch-derived seeds, so the
    contrast set grows across epochs while staying reproducible.
    """
    if not triples:
        raise DataError("inferential corpus is empty")
    model.train(True)
    opt = cfg.optimizer(model.parameters().values())
    logs: list[dict] = []
    step = 0
    for epoch in range(cfg.epochs):
        examples = make_im_examples(triples, vocab, rng.child(epoch, 0))
        for batch in batches(examples, cfg.batch_size, rng.child(epoch, 1)):
            loss = batch_loss(model, batch)
            backward(loss.total)
            opt.step()
            opt.zero_grad()
            step += 1
            rec = {"step": step, "epoch": epoch, "loss_total": loss.value}
            for name, value in loss.component_values().items():
                rec[f"loss_{name}"] = value
            logs.append(rec)
            if cfg.max_steps and step >= cfg.max_steps:
                return logs
    return logs


def eval_lm_loss(
    model: Seq2SeqModel, examples: Sequence[ImExample]
) -> float:
    """Mean LM loss over true pairs, eval mode (reproducibility probe)."""
    was_training = model.training
    model.eval()
    with no_grad():
        values = [
            lm_loss(model, ex.x_ids, ex.y_ids).item()
            for ex in examples
            if ex.label == CONSISTENT
        ]
    model.train(was_training)
    if not values:
        raise DataError("no positive examples to evaluate")
    return float(np.mean(values))


def discriminator_accuracy(model: Seq2SeqModel, examples: Sequence[ImExample]) -> float:
    """Fraction of examples whose argmax class matches the label."""
    was_training = model.training
    model.eval()
    correct = 0
    with no_grad():
        for ex in examples:
            logits = model.classify(ex.x_ids, ex.y_ids)
            correct += int(np.argmax(logits.data) == ex.label)
    model.train(was_training)
    return correct / len(examples)


def generate_explanation(
    model: Seq2SeqModel,
    vocab: Vocab,
    event_text: str,
    relation: Relation,
    decode_config=None,
    rng: Optional[Rng] = None,
) -> str:
    """Decode the explanation text for (event, relation)."""
    from .decoding import DecodeConfig, decode

    decode_config = decode_config or DecodeConfig(strategy="greedy")
    x_ids = build_im_input(vocab, event_text, relation)
    was_training = model.training
    model.eval()
    with no_grad():
        enc = model.encode(x_ids)
        ids = decode(model, enc.hidden, decode_config, rng)
    model.train(was_training)
    return vocab.decode(ids)
