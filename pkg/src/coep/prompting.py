"""Prompt training: differentiable explanation decoding under a freeze plan.

During the joint stage the inference module's decoder, LM head,
classification head, and (tied) embedding are frozen; only its encoder and
the whole generation module update.  Explanations are decoded from the
frozen decoder with the straight-through Gumbel-Softmax estimator: each
emitted token id follows the argmax of that step's logits, while the next
step's input embedding is the Gumbel-Softmax-weighted mix of embedding rows,
so the semantic-coherence score backpropagates through the decode into the
encoder states.

The frozen discriminator scores the decoded explanation against its input;
the negative log of its consistent-class probability is the semantic
coherence loss, averaged over the relations of each example.  The inference
module runs without dropout here so the frozen scorer stays deterministic;
the generation module keeps its configured dropout.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .corpus import (
    CANONICAL_RELATIONS,
    FegExample,
    Relation,
    Vocab,
    build_prompt_input,
    negative_sample_feg,
)
from .corpus.vocab import BOS_ID, EOS_ID
from .errors import DataError, FreezeViolationError, TrainingContractError
from .gm import PromptSet, build_memory, encode_feg_input, feg_cls_loss, feg_lm_loss
from .losses import LossValue
from .numerics import Parameter, Rng, Tensor, backward
from .numerics import ops
from .seq2seq import EncoderState, Seq2SeqModel, StepDecoder
from .training import TrainConfig
from .im import CONSISTENT

log = logging.getLogger(__name__)


# -- freeze plan ---------------------------------------------------------------


@dataclass(frozen=True)
class FreezePlan:
    """Disjoint prefix sets that must cover every parameter of the model."""

    frozen_prefixes: tuple[str, ...]
    trainable_prefixes: tuple[str, ...]

    @classmethod
    def inference_module_default(cls) -> "FreezePlan":
        # The tied embedding feeds both the frozen LM head and the
        # soft-embedding mix, so it freezes with the decoder.
        return cls(
            frozen_prefixes=("decoder.", "lm_head.", "cls_head.", "embedding."),
            trainable_prefixes=("encoder.",),
        )

    def _side(self, name: str) -> str:
        frozen = any(name.startswith(p) for p in self.frozen_prefixes)
        trainable = any(name.startswith(p) for p in self.trainable_prefixes)
        if frozen and trainable:
            raise TrainingContractError(f"parameter {name!r} matches both sides of the plan")
        if not frozen and not trainable:
            raise TrainingContractError(f"parameter {name!r} is covered by neither side")
        return "frozen" if frozen else "trainable"

    def validate(self, params: dict[str, Parameter]) -> None:
        for name in params:
            self._side(name)

    def apply(self, model: Seq2SeqModel) -> None:
        self.validate(model.parameters())
        for name, p in model.parameters().items():
            p.set_frozen(self._side(name) == "frozen")

    def frozen_names(self, params: dict[str, Parameter]) -> list[str]:
        return [n for n in params if self._side(n) == "frozen"]


def audit_frozen(
    model: Seq2SeqModel, reference: dict[str, np.ndarray], names: Sequence[str]
) -> None:
    """Raise if any parameter in ``names`` differs bitwise from ``reference``."""
    for name in names:
        current = model.parameters()[name].data
        if current.tobytes() != reference[name].tobytes():
            raise FreezeViolationError(f"frozen parameter {name!r} changed during training")


# -- straight-through decoding ---------------------------------------------------


@dataclass
class StDecodeResult:
    """Differentiable decode of one explanation.

    ``token_ids`` follow the per-step argmax (the ending token, when emitted,
    is excluded); ``soft_rows`` are the Gumbel-Softmax embedding mixes that
    fed the decoder, one per emitted token; gradients of anything built from
    them reach the encoder only.
    """

    token_ids: list[int]
    soft_rows: list[Tensor]
    step_logits: list[Tensor]
    encoder_state: EncoderState


def st_decode_explanation(
    im_model: Seq2SeqModel,
    x_i_ids: Sequence[int],
    max_len: int,
    temperature: float,
    rng: Optional[Rng],
    encoder_state: Optional[EncoderState] = None,
) -> StDecodeResult:
    """Decode up to ``max_len`` explanation tokens with the ST estimator.

    Stops early when the argmax path emits the ending token.  A precomputed
    ``encoder_state`` for ``x_i_ids`` may be supplied to share the encoder
    pass with prompt collection.
    """
    if max_len < 1:
        raise ValueError(f"max_len must be >= 1, got {max_len}")
    enc = encoder_state if encoder_state is not None else im_model.encode(x_i_ids)
    d = im_model.config.d_model
    stepper = StepDecoder(im_model, enc.hidden)
    next_row = im_model.embed_tokens([BOS_ID])
    token_ids: list[int] = []
    soft_rows: list[Tensor] = []
    step_logits: list[Tensor] = []
    for _ in range(max_len):
        state = stepper.step_rows(next_row)
        logits = ops.row(im_model.lm_logits(state), -1)
        next_id = int(np.argmax(logits.data))
        if next_id == EOS_ID:
            break
        token_ids.append(next_id)
        step_logits.append(logits)
        gs = ops.gumbel_softmax(logits, temperature, rng, straight_through=True)
        soft = ops.matmul(gs, im_model.p["embedding.token"])
        soft_rows.append(soft)
        next_row = ops.reshape(soft, (1, d))
    return StDecodeResult(
        token_ids=token_ids,
        soft_rows=soft_rows,
        step_logits=step_logits,
        encoder_state=enc,
    )


def semantic_coherence_loss(
    im_model: Seq2SeqModel, result: StDecodeResult
) -> LossValue:
    """Negative log of the frozen discriminator's consistent-class probability
    for the decoded explanation, evaluated on the differentiable path."""
    rows = [im_model.embed_tokens([BOS_ID])]
    rows += [ops.reshape(v, (1, im_model.config.d_model)) for v in result.soft_rows]
    rows += [im_model.embed_tokens([EOS_ID])]
    logits = im_model.classify_rows(result.encoder_state.hidden, ops.concat(rows, axis=0))
    return LossValue.from_components(
        {"sc": ops.binary_cross_entropy_logits(logits, CONSISTENT)}
    )


def coep_total_loss(
    lm: Tensor, cls: Optional[Tensor], sc: Optional[Tensor]
) -> LossValue:
    """Joint objective: generation LM + consistency cls + mean coherence."""
    components = {"lm": lm}
    if cls is not None:
        components["cls"] = cls
    if sc is not None:
        components["sc"] = sc
    return LossValue.from_components(components)


# -- the joint training loop ------------------------------------------------------


@dataclass
class CoepTrainConfig(TrainConfig):
    batch_size: int = 8
    steps: int = 120
    st_max_len: int = 12
    gs_temperature: float = 1.0
    gs_anneal: bool = False  # linear temperature schedule down to 0.5
    use_prompts: bool = True
    use_cls: bool = True
    use_sc: bool = True
    relations: tuple[Relation, ...] = field(default_factory=lambda: CANONICAL_RELATIONS)
    audit_every: int = 0  # 0 = audit only at the end

    def temperature_at(self, step: int) -> float:
        if not self.gs_anneal or self.steps <= 1:
            return self.gs_temperature
        frac = step / (self.steps - 1)
        return self.gs_temperature + (0.5 - self.gs_temperature) * frac


def train_coep(
    im_model: Seq2SeqModel,
    gm_model: Seq2SeqModel,
    examples: Sequence[FegExample],
    vocab: Vocab,
    plan: FreezePlan,
    cfg: CoepTrainConfig,
    rng: Rng,
) -> list[dict]:
    """Joint prompt-training loop over future-event examples.

    Per step and example: encode the generation input, collect one prompt per
    relation from the inference encoder (sharing each encoder pass with the
    straight-through decode for that relation), build the prompted memory,
    and combine generation LM loss (true targets), consistency loss (true and
    corrupted targets), and the semantic coherence loss (true pairs only,
    averaged over relations).  Frozen parameters are audited bitwise.
    """
    if not examples:
        raise DataError("future-event corpus is empty")
    positives = [ex for ex in examples if ex.label == CONSISTENT]
    if not positives:
        raise DataError("future-event corpus has no true pairs")
    event_pool = sorted(
        {ex.target for ex in positives} | {ex.current for ex in positives}
    )

    plan.apply(im_model)
    for p in gm_model.parameters().values():
        p.set_frozen(False)
    frozen_names = plan.frozen_names(im_model.parameters())
    reference = {n: im_model.parameters()[n].data.copy() for n in frozen_names}

    im_model.train(False)  # no dropout in the frozen scorer; encoder still learns
    gm_model.train(True)
    opt = cfg.optimizer(
        list(im_model.parameters().values()) + list(gm_model.parameters().values())
    )

    logs: list[dict] = []
    order = [int(i) for i in rng.child(7).permutation(len(positives))]
    cursor = 0
    for step in range(cfg.steps):
        batch = []
        for _ in range(min(cfg.batch_size, len(positives))):
            batch.append(positives[order[cursor]])
            cursor += 1
            if cursor == len(order):
                order = [int(i) for i in rng.child(8, step).permutation(len(positives))]
                cursor = 0
        tau = cfg.temperature_at(step)
        lm_parts: list[Tensor] = []
        cls_parts: list[Tensor] = []
        sc_parts: list[Tensor] = []
        rows_seen: set[tuple[int, int]] = set()
        for j, ex in enumerate(batch):
            ex_rng = rng.child(step, j)
            x_ids, enc_g = encode_feg_input(gm_model, ex, vocab)
            y_ids = vocab.encode(ex.target)
            prompts = None
            if cfg.use_prompts and cfg.relations:
                vectors = []
                per_relation_sc: list[Tensor] = []
                for ri, relation in enumerate(cfg.relations):
                    ids_i = build_prompt_input(vocab, x_ids, relation)
                    enc_i = im_model.encode(ids_i)
                    vectors.append(ops.row(enc_i.hidden, -1))
                    if cfg.use_sc:
                        result = st_decode_explanation(
                            im_model,
                            ids_i,
                            cfg.st_max_len,
                            tau,
                            ex_rng.child(ri),
                            encoder_state=enc_i,
                        )
                        per_relation_sc.append(
                            semantic_coherence_loss(im_model, result).total
                        )
                prompts = PromptSet(vectors=vectors, relations=tuple(cfg.relations))
                if per_relation_sc:
                    sc_parts.append(ops.mean_of(per_relation_sc))
            memory = build_memory(prompts, enc_g)
            rows_seen.add(
                (memory.data.shape[0], enc_g.hidden.data.shape[0])
            )
            lm_parts.append(feg_lm_loss(gm_model, memory, y_ids).total)
            if cfg.use_cls:
                cls_parts.append(
                    feg_cls_loss(gm_model, x_ids, y_ids, 0).components["cls"]
                )
                negative = negative_sample_feg(ex, event_pool, ex_rng.child(999))
                cls_parts.append(
                    feg_cls_loss(
                        gm_model, x_ids, vocab.encode(negative.target), 1
                    ).components["cls"]
                )
        loss = coep_total_loss(
            ops.mean_of(lm_parts),
            ops.mean_of(cls_parts) if cls_parts else None,
            ops.mean_of(sc_parts) if sc_parts else None,
        )
        backward(loss.total)
        opt.step()
        opt.zero_grad()
        rec = {
            "step": step + 1,
            "loss_total": loss.value,
            "prompt_rows": len(cfg.relations) if cfg.use_prompts else 0,
            "memory_rows": sorted(rows_seen),
        }
        for name, value in loss.component_values().items():
            rec[f"loss_{name}"] = value
        if cfg.audit_every and (step + 1) % cfg.audit_every == 0:
            audit_frozen(im_model, reference, frozen_names)
            rec["freeze_audit"] = "ok"
        logs.append(rec)
    audit_frozen(im_model, reference, frozen_names)
    logs.append({"step": cfg.steps, "freeze_audit": "ok", "final": True})
    return logs
