"""Command-line interface.

Commands: make-data, finetune-im, finetune-gm, train-feg, generate,
tell-story, eval, pipeline.  Exit codes:

    0  success
    1  usage error (bad arguments or config keys)
    2  data error (missing/malformed corpora or inputs)
    3  checkpoint error (missing file, checksum or architecture mismatch)
    4  training-contract violation (frozen parameter changed, bad stage state)

Errors print one machine-parsable line to stderr: ``error[<code>]: <message>``
(or a JSON object under ``--json``).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .checkpoint import CheckpointError, load_model
from .corpus import Relation
from .corpus.synth import make_data
from .decoding import DecodeConfig, tell_story
from .errors import DataError, TrainingContractError
from .im import generate_explanation
from .metrics import evaluate_generations
from .numerics import Rng
from .pipeline import (
    load_corpora,
    relations_from_config,
    run_pipeline,
    stage_finetune_gm,
    stage_finetune_im,
    stage_generate,
    stage_train_feg,
)
from .runconfig import load_config

EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_CHECKPOINT = 3
EXIT_CONTRACT = 4


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        raise UsageError(message)


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--seed", type=int, help="run seed (overrides config)")
    p.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override any config key (repeatable)",
    )


def _resolve_config(args):
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    for name in ("skip_skg", "skip_pt", "skip_cls"):
        if getattr(args, name, False):
            overrides[name] = "true"
    if getattr(args, "prompts", None):
        overrides["prompts"] = args.prompts
    if getattr(args, "data", None):
        overrides["data_dir"] = args.data
    if getattr(args, "steps", None) is not None and hasattr(args, "feg_steps_alias"):
        overrides["feg_steps"] = args.steps
    try:
        return load_config(args.config, overrides)
    except DataError as e:
        raise UsageError(str(e)) from e


def build_parser() -> _Parser:
    parser = _Parser(prog="coep", description=__doc__.split("\n\n")[0])
    parser.add_argument("--json", action="store_true", help="machine-readable output")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-data", help="write the bundled synthetic corpora")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=7)

    p = sub.add_parser("finetune-im", help="fine-tune the inference module")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    _add_config_args(p)

    p = sub.add_parser("finetune-gm", help="fine-tune the generation module")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    _add_config_args(p)

    p = sub.add_parser("train-feg", help="joint prompt-training stage")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--im", required=True, help="inference-module checkpoint")
    p.add_argument("--gm", help="generation-module checkpoint (omit with --skip-skg)")
    p.add_argument("--skip-pt", dest="skip_pt", action="store_true")
    p.add_argument("--skip-cls", dest="skip_cls", action="store_true")
    p.add_argument("--skip-skg", dest="skip_skg", action="store_true")
    p.add_argument("--prompts", help="all | none | relation name")
    _add_config_args(p)

    p = sub.add_parser("generate", help="generate one event or an eval batch")
    p.add_argument("--gm", required=True)
    p.add_argument("--im")
    p.add_argument("--history", default="", help="history events joined by ' | '")
    p.add_argument("--current")
    p.add_argument("--data", help="data dir: batch mode over the eval split")
    p.add_argument("--out")
    p.add_argument("--strategy", choices=["greedy", "topk"])
    p.add_argument("--k", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--explain", action="store_true",
                   help="also decode the nine relation explanations")
    p.add_argument("--prompts", help="all | none | relation name")
    _add_config_args_lite(p)

    p = sub.add_parser("tell-story", help="recurrent storytelling from a start event")
    p.add_argument("--gm", required=True)
    p.add_argument("--im")
    p.add_argument("--first", required=True)
    p.add_argument("--steps", type=int, default=4)
    p.add_argument("--strategy", choices=["greedy", "topk"])
    p.add_argument("--k", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--prompts", help="all | none | relation name")
    _add_config_args_lite(p)

    p = sub.add_parser("eval", help="score predictions against references")
    p.add_argument("--pred", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--nll", help="jsonl of per-token reference NLLs")
    p.add_argument("--rankings", help="jsonl of human rankings")
    p.add_argument("--out", required=True)

    p = sub.add_parser("pipeline", help="run every stage end to end")
    p.add_argument("--out", required=True)
    p.add_argument("--skip-pt", dest="skip_pt", action="store_true")
    p.add_argument("--skip-cls", dest="skip_cls", action="store_true")
    p.add_argument("--skip-skg", dest="skip_skg", action="store_true")
    p.add_argument("--prompts", help="all | none | relation name")
    _add_config_args(p)

    return parser


def _add_config_args_lite(p) -> None:
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")


def _decode_config(cfg, args) -> DecodeConfig:
    return DecodeConfig(
        strategy=args.strategy or cfg.strategy,
        k=args.k if args.k is not None else cfg.k,
        max_len=cfg.decode_max_len,
        seed=args.seed if args.seed is not None else cfg.seed,
        temperature=cfg.decode_temperature,
    )


def _emit(args, payload: dict) -> None:
    if args.json:
        print(json.dumps(payload, sort_keys=True, default=str))
    else:
        for key, value in payload.items():
            print(f"{key}: {value}")


def _cmd_make_data(args) -> dict:
    return make_data(args.out, args.seed)


def _cmd_finetune_im(args) -> dict:
    cfg = _resolve_config(args)
    corpora = load_corpora(args.data)
    path = stage_finetune_im(cfg, corpora, args.out)
    return {"checkpoint": path}


def _cmd_finetune_gm(args) -> dict:
    cfg = _resolve_config(args)
    corpora = load_corpora(args.data)
    path = stage_finetune_gm(cfg, corpora, args.out)
    return {"checkpoint": path}


def _cmd_train_feg(args) -> dict:
    cfg = _resolve_config(args)
    if args.gm is None and not cfg.skip_skg:
        raise UsageError("--gm is required unless --skip-skg is given")
    corpora = load_corpora(args.data)
    im_path, gm_path = stage_train_feg(
        cfg, corpora, args.out, Path(args.im),
        None if cfg.skip_skg or args.gm is None else Path(args.gm),
    )
    return {"im_checkpoint": im_path, "gm_checkpoint": gm_path}


def _cmd_generate(args) -> dict:
    cfg = _resolve_config(args)
    if args.data:
        if not args.out:
            raise UsageError("batch generation needs --out")
        corpora = load_corpora(args.data)
        result = stage_generate(
            cfg, corpora, args.out,
            Path(args.im) if args.im else None, Path(args.gm),
        )
        return {k: str(v) for k, v in result.items()}
    if not args.current:
        raise UsageError("single-event generation needs --current (or --data)")
    gm_model, vocab, _ = load_model(args.gm, expect_kind="gm")
    im_model = None
    if args.im:
        im_model, _, _ = load_model(args.im, expect_kind="im")
    history = [h.strip() for h in args.history.split("|") if h.strip()]
    relations = relations_from_config(cfg)
    from .decoding import generate_future_event

    decode_cfg = _decode_config(cfg, args)
    event = generate_future_event(
        im_model, gm_model, vocab, history, args.current, decode_cfg,
        relations or None, Rng(decode_cfg.seed),
    )
    payload = {"event": event}
    if args.explain:
        if im_model is None:
            raise UsageError("--explain needs --im")
        explain_cfg = DecodeConfig(
            strategy=decode_cfg.strategy, k=decode_cfg.k, max_len=12,
            seed=decode_cfg.seed, temperature=decode_cfg.temperature,
        )
        context = " ".join([*history, args.current])
        payload["explanations"] = {
            r.value: generate_explanation(
                im_model, vocab, context, r, explain_cfg, Rng(decode_cfg.seed)
            )
            for r in Relation
        }
    return payload


def _cmd_tell_story(args) -> dict:
    cfg = _resolve_config(args)
    gm_model, vocab, _ = load_model(args.gm, expect_kind="gm")
    im_model = None
    if args.im:
        im_model, _, _ = load_model(args.im, expect_kind="im")
    relations = relations_from_config(cfg)
    decode_cfg = _decode_config(cfg, args)
    events = tell_story(
        im_model, gm_model, vocab, args.first, args.steps, decode_cfg,
        relations or None, Rng(decode_cfg.seed),
    )
    return {"story": events}


def _cmd_eval(args) -> dict:
    from .corpus.examples import read_jsonl

    pred_path, ref_path = Path(args.pred), Path(args.ref)
    for path in (pred_path, ref_path):
        if not path.exists():
            raise DataError(f"missing file: {path}")
    predictions = pred_path.read_text(encoding="utf-8").splitlines()
    references = ref_path.read_text(encoding="utf-8").splitlines()
    if len(predictions) != len(references):
        raise DataError(
            f"prediction/reference count mismatch: {len(predictions)} vs {len(references)}"
        )
    nlls = None
    if args.nll:
        nlls = [v for rec in read_jsonl(args.nll) for v in rec["nlls"]]
    rankings = None
    annotator_ranks = None
    if args.rankings:
        records = read_jsonl(args.rankings)
        rankings = [rec["rank"] for rec in records if "rank" in rec]
        if records and "ranks_a" in records[0]:
            annotator_ranks = (
                [v for rec in records for v in rec["ranks_a"]],
                [v for rec in records for v in rec["ranks_b"]],
            )
    report = evaluate_generations(
        predictions, references, per_token_nlls=nlls,
        rankings=rankings or None, annotator_ranks=annotator_ranks,
        meta={"count": len(predictions)},
    )
    Path(args.out).write_text(report.to_json(), encoding="utf-8")
    return {"report": args.out, **{k: v for k, v in report.metrics.items() if v is not None}}


def _cmd_pipeline(args) -> dict:
    cfg = _resolve_config(args)
    result = run_pipeline(cfg, args.out)
    return {k: str(v) for k, v in result.items()}


_COMMANDS = {
    "make-data": _cmd_make_data,
    "finetune-im": _cmd_finetune_im,
    "finetune-gm": _cmd_finetune_gm,
    "train-feg": _cmd_train_feg,
    "generate": _cmd_generate,
    "tell-story": _cmd_tell_story,
    "eval": _cmd_eval,
    "pipeline": _cmd_pipeline,
}


def _fail(args, code: int, message: str) -> int:
    if getattr(args, "json", False):
        print(json.dumps({"error": code, "message": message}), file=sys.stderr)
    else:
        print(f"error[{code}]: {message}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = argparse.Namespace(json=False)
    try:
        args = parser.parse_args(argv)
        payload = _COMMANDS[args.command](args)
        _emit(args, payload)
        return 0
    except UsageError as e:
        return _fail(args, EXIT_USAGE, str(e))
    except DataError as e:
        return _fail(args, EXIT_DATA, str(e))
    except (CheckpointError, FileNotFoundError) as e:
        return _fail(args, EXIT_CHECKPOINT, str(e))
    except TrainingContractError as e:
        return _fail(args, EXIT_CONTRACT, str(e))


if __name__ == "__main__":
    sys.exit(main())
