"""Stage orchestration shared by the CLI and the ablation runner.

The full pipeline is make-data -> finetune-im -> finetune-gm (skippable) ->
train-feg -> generate -> eval.  Every stage writes its checkpoint/log/config
artifacts under one output directory and is deterministic given the seed.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import checkpoint as ckpt
from .corpus import (
    CANONICAL_RELATIONS,
    FegExample,
    Relation,
    Vocab,
    build_gm_input,
    load_inferential,
    load_sequential,
    load_stories,
    make_im_examples,
    unfold_story,
    write_jsonl,
)
from .corpus.vocab import BOS_ID, EOS_ID
from .decoding import DecodeConfig, generate_future_event
from .errors import DataError
from .gm import build_memory, collect_prompt_set, finetune_gm
from .im import finetune_im
from .numerics import Rng, no_grad
from .prompting import CoepTrainConfig, FreezePlan, train_coep
from .runconfig import RunConfig
from .seq2seq import ModelConfig, Seq2SeqModel
from .training import TrainConfig

log = logging.getLogger(__name__)


def relations_from_config(cfg: RunConfig) -> tuple[Relation, ...]:
    if cfg.prompts == "all":
        return CANONICAL_RELATIONS
    if cfg.prompts == "none":
        return ()
    return (Relation.from_name(cfg.prompts),)


def load_corpora(data_dir) -> dict:
    data = Path(data_dir)
    for name in ("inferential.jsonl", "sequential.jsonl", "stories.jsonl", "vocab.txt"):
        if not (data / name).exists():
            raise DataError(f"missing data file: {data / name} (run make-data first)")
    pairs, skipped = load_sequential(data / "sequential.jsonl")
    corpora = {
        "triples": load_inferential(data / "inferential.jsonl"),
        "pairs": pairs,
        "pairs_skipped": skipped,
        "stories": load_stories(data / "stories.jsonl"),
        "vocab": Vocab.load(data / "vocab.txt"),
    }
    eval_path = data / "stories_eval.jsonl"
    corpora["stories_eval"] = load_stories(eval_path) if eval_path.exists() else []
    return corpora


def build_model(cfg: RunConfig, vocab: Vocab, seed_key: int) -> Seq2SeqModel:
    mc = ModelConfig(vocab_size=len(vocab), **cfg.model_config_dict())
    return Seq2SeqModel(mc, Rng(cfg.seed).child(seed_key))


def _train_config(cfg: RunConfig, epochs: int, batch_size: int, max_steps: int) -> TrainConfig:
    return TrainConfig(
        epochs=epochs,
        batch_size=batch_size,
        max_steps=max_steps,
        lr=cfg.lr,
        weight_decay=cfg.weight_decay,
        beta1=cfg.beta1,
        beta2=cfg.beta2,
        eps=cfg.eps,
    )


def stage_finetune_im(cfg: RunConfig, corpora: dict, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    vocab = corpora["vocab"]
    model = build_model(cfg, vocab, seed_key=1)
    logs = finetune_im(
        model,
        corpora["triples"],
        vocab,
        _train_config(cfg, cfg.im_epochs, cfg.im_batch_size, cfg.im_max_steps),
        Rng(cfg.seed).child(11),
    )
    write_jsonl(out / "im_train_log.jsonl", logs)
    cfg.echo(out / "finetune-im.config.txt")
    path = out / "im.ckpt"
    ckpt.save_model(path, model, vocab, kind="im", meta={"stage": "finetune-im"})
    return path


def stage_finetune_gm(cfg: RunConfig, corpora: dict, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    vocab = corpora["vocab"]
    model = build_model(cfg, vocab, seed_key=2)
    logs = finetune_gm(
        model,
        corpora["pairs"],
        vocab,
        _train_config(cfg, cfg.gm_epochs, cfg.gm_batch_size, cfg.gm_max_steps),
        Rng(cfg.seed).child(12),
    )
    write_jsonl(out / "gm_train_log.jsonl", logs)
    cfg.echo(out / "finetune-gm.config.txt")
    path = out / "gm.ckpt"
    ckpt.save_model(path, model, vocab, kind="gm", meta={"stage": "finetune-gm"})
    return path


def feg_examples_from_stories(stories: Sequence[Sequence[str]]) -> list[FegExample]:
    examples: list[FegExample] = []
    for story in stories:
        examples.extend(unfold_story(story))
    return examples


def stage_train_feg(
    cfg: RunConfig,
    corpora: dict,
    out_dir,
    im_path,
    gm_path: Optional[Path],
) -> tuple[Path, Path]:
    """Joint prompt-training stage; ``gm_path=None`` starts the generation
    module from random initialization (the sequential-KG-ablated variant)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    im_model, vocab, _ = ckpt.load_model(im_path, expect_kind="im")
    if gm_path is None:
        gm_model = build_model(cfg, vocab, seed_key=2)
    else:
        gm_model, _, _ = ckpt.load_model(gm_path, expect_kind="gm")
    examples = feg_examples_from_stories(corpora["stories"])
    relations = relations_from_config(cfg)
    coep_cfg = CoepTrainConfig(
        batch_size=cfg.feg_batch_size,
        steps=cfg.feg_steps,
        st_max_len=cfg.st_max_len,
        gs_temperature=cfg.gs_temperature,
        gs_anneal=cfg.gs_anneal,
        use_prompts=bool(relations),
        use_cls=not cfg.skip_cls,
        use_sc=(not cfg.skip_pt) and bool(relations),
        relations=relations,
        lr=cfg.lr,
        weight_decay=cfg.weight_decay,
        beta1=cfg.beta1,
        beta2=cfg.beta2,
        eps=cfg.eps,
    )
    # snapshot of the inference encoder before prompt training, for
    # before/after comparisons of standalone explanation quality
    ckpt.save_model(
        out / "coep_im_before.ckpt", im_model, vocab, kind="im",
        meta={"stage": "train-feg", "snapshot": "before"},
    )
    logs = train_coep(
        im_model,
        gm_model,
        examples,
        vocab,
        FreezePlan.inference_module_default(),
        coep_cfg,
        Rng(cfg.seed).child(13),
    )
    write_jsonl(out / "feg_train_log.jsonl", logs)
    cfg.echo(out / "train-feg.config.txt")
    im_out = out / "coep_im.ckpt"
    gm_out = out / "coep_gm.ckpt"
    ckpt.save_model(im_out, im_model, vocab, kind="im", meta={"stage": "train-feg"})
    ckpt.save_model(gm_out, gm_model, vocab, kind="gm", meta={"stage": "train-feg"})
    return im_out, gm_out


def per_token_nlls(
    im_model: Optional[Seq2SeqModel],
    gm_model: Seq2SeqModel,
    vocab: Vocab,
    example: FegExample,
    relations: Sequence[Relation],
) -> list[float]:
    """Teacher-forced per-token NLLs of the reference target (natural log)."""
    with no_grad():
        x_ids = build_gm_input(vocab, example.history, example.current)
        enc = gm_model.encode(x_ids)
        prompts = None
        if im_model is not None and relations:
            prompts = collect_prompt_set(im_model, x_ids, vocab, relations)
        memory = build_memory(prompts, enc)
        y_ids = vocab.encode(example.target)
        logits = gm_model.decode_all_logits([BOS_ID, *y_ids], memory).data.astype(
            np.float64
        )
        targets = [*y_ids, EOS_ID]
        m = logits.max(axis=1, keepdims=True)
        lse = m[:, 0] + np.log(np.exp(logits - m).sum(axis=1))
        return [float(lse[t] - logits[t, tok]) for t, tok in enumerate(targets)]


def stage_generate(
    cfg: RunConfig,
    corpora: dict,
    out_dir,
    im_path: Optional[Path],
    gm_path,
    stories_key: str = "stories_eval",
) -> dict:
    """Batch generation over the evaluation split.

    Writes predictions, aligned references, and per-token reference NLLs.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    gm_model, vocab, _ = ckpt.load_model(gm_path, expect_kind="gm")
    im_model = None
    if im_path is not None:
        im_model, _, _ = ckpt.load_model(im_path, expect_kind="im")
    gm_model.eval()
    if im_model is not None:
        im_model.eval()
    stories = corpora[stories_key] or corpora["stories"]
    examples = feg_examples_from_stories(stories)
    if cfg.eval_limit:
        examples = examples[: cfg.eval_limit]
    relations = relations_from_config(cfg)
    decode_cfg = DecodeConfig(
        strategy=cfg.strategy,
        k=cfg.k,
        max_len=cfg.decode_max_len,
        seed=cfg.seed,
        temperature=cfg.decode_temperature,
    )
    rng = Rng(cfg.seed).child(14)
    predictions, references, nlls = [], [], []
    for i, ex in enumerate(examples):
        predictions.append(
            generate_future_event(
                im_model, gm_model, vocab, ex.history, ex.current, decode_cfg,
                relations or None, rng.child(i),
            )
        )
        references.append(vocab.decode(vocab.encode(ex.target)))
        nlls.append(per_token_nlls(im_model, gm_model, vocab, ex, relations))
    (out / "predictions.txt").write_text(
        "".join(p + "\n" for p in predictions), encoding="utf-8"
    )
    (out / "references.txt").write_text(
        "".join(r + "\n" for r in references), encoding="utf-8"
    )
    write_jsonl(out / "reference_nlls.jsonl", [{"nlls": row} for row in nlls])
    cfg.echo(out / "generate.config.txt")
    return {
        "predictions": out / "predictions.txt",
        "references": out / "references.txt",
        "nlls": out / "reference_nlls.jsonl",
        "count": len(examples),
    }


def run_pipeline(cfg: RunConfig, out_dir) -> dict:
    """Run every stage end to end; returns artifact paths."""
    from .corpus.synth import make_data
    from .metrics import evaluate_generations
    from .corpus.examples import read_jsonl

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data_dir = out / "data"
    counts = make_data(data_dir, cfg.seed)
    corpora = load_corpora(data_dir)
    im_path = stage_finetune_im(cfg, corpora, out)
    gm_path = None if cfg.skip_skg else stage_finetune_gm(cfg, corpora, out)
    coep_im, coep_gm = stage_train_feg(cfg, corpora, out, im_path, gm_path)
    gen = stage_generate(cfg, corpora, out, coep_im, coep_gm)
    predictions = (out / "predictions.txt").read_text(encoding="utf-8").splitlines()
    references = (out / "references.txt").read_text(encoding="utf-8").splitlines()
    flat_nlls = [
        v for rec in read_jsonl(out / "reference_nlls.jsonl") for v in rec["nlls"]
    ]
    report = evaluate_generations(
        predictions, references, per_token_nlls=flat_nlls,
        meta={"count": len(predictions), "seed": cfg.seed},
    )
    report_path = out / "report.json"
    report_path.write_text(report.to_json(), encoding="utf-8")
    cfg.echo(out / "pipeline.config.txt")
    return {
        "data": counts,
        "im": im_path,
        "gm": gm_path,
        "coep_im": coep_im,
        "coep_gm": coep_gm,
        "report": report_path,
        **gen,
    }


def next_event_accuracy(
    im_model: Optional[Seq2SeqModel],
    gm_model: Seq2SeqModel,
    vocab: Vocab,
    examples: Sequence[FegExample],
    relations: Sequence[Relation],
    limit: int = 0,
) -> float:
    """Exact-match accuracy of greedy next-event generation."""
    if limit:
        examples = examples[:limit]
    decode_cfg = DecodeConfig(strategy="greedy", max_len=24)
    hits = 0
    for ex in examples:
        pred = generate_future_event(
            im_model, gm_model, vocab, ex.history, ex.current, decode_cfg,
            relations or None,
        )
        hits += int(pred == vocab.decode(vocab.encode(ex.target)))
    return hits / len(examples)
