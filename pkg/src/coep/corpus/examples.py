"""Training-example shapes and the transforms that produce them.

Three corpora feed the pipeline: inferential triples (event, relation, tail
explanation), sequential event pairs (preceding, future), and stories that
unfold into (history, current, target) generation examples.  Builders here
also handle input segmentation and contrastive negative sampling.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

from ..numerics import Rng
from .relations import (
    SEQUENTIAL_FORWARD,
    SEQUENTIAL_RELATIONS,
    Relation,
    reformulate_relation,
)
from .vocab import BOS_ID, EOS_ID, Vocab

log = logging.getLogger(__name__)

POSITIVE_LABEL = 0
NEGATIVE_LABEL = 1


@dataclass(frozen=True)
class InferentialTriple:
    head_event: str
    relation: Relation
    tail_event: str

    def __post_init__(self):
        if not (self.head_event and self.tail_event):
            raise ValueError("inferential triple fields must be nonempty")


@dataclass(frozen=True)
class SequentialPair:
    preceding: str
    future: str
    source_relation: str


@dataclass(frozen=True)
class FegExample:
    history: tuple[str, ...]
    current: str
    target: str
    label: int = POSITIVE_LABEL

    def __post_init__(self):
        if not self.target:
            raise ValueError("FEG example target must be nonempty")


@dataclass(frozen=True)
class ImExample:
    """One discriminator/LM training pair: segmented input ids and target ids."""

    x_ids: tuple[int, ...]
    y_ids: tuple[int, ...]
    label: int
    relation: Relation
    head_event: str = ""
    tail_event: str = ""


# -- input segmentation -------------------------------------------------------


def segment(vocab: Vocab, text: str) -> list[int]:
    """Wrap one text segment as <s> tokens </s>; empty text gives <s></s>."""
    return [BOS_ID] + vocab.encode(text) + [EOS_ID]


def build_im_input(vocab: Vocab, event_text: str, relation: Relation) -> list[int]:
    """Two segments: the event, then the reformulated relation phrase."""
    if not event_text:
        raise ValueError("event text must be nonempty")
    return segment(vocab, event_text) + segment(vocab, reformulate_relation(relation))


def build_gm_input(vocab: Vocab, history: Sequence[str], current: str) -> list[int]:
    """Two segments: all history events joined by spaces, then the current event."""
    if not current:
        raise ValueError("current event must be nonempty")
    return segment(vocab, " ".join(history)) + segment(vocab, current)


def build_prompt_input(
    vocab: Vocab, x_g_ids: Sequence[int], relation: Relation
) -> list[int]:
    """Prompt clarification input: the generation input plus a relation segment."""
    return list(x_g_ids) + segment(vocab, reformulate_relation(relation))


def build_seq_input(vocab: Vocab, preceding: str) -> list[int]:
    """Single-segment input for sequential-pair fine-tuning."""
    return segment(vocab, preceding)


# -- story unfolding ----------------------------------------------------------


def unfold_story(events: Sequence[str]) -> list[FegExample]:
    """Each position i>=1 yields (history=events[:i-1], current=events[i-1],
    target=events[i]); an n-event story unfolds into n-1 examples."""
    if len(events) < 2:
        return []
    return [
        FegExample(history=tuple(events[: i - 1]), current=events[i - 1], target=events[i])
        for i in range(1, len(events))
    ]


# -- sequential-KG normalization ----------------------------------------------


def sequentialize_triple(
    head: str, relation: str, tail: str
) -> Optional[SequentialPair]:
    """Order a raw (head, relation, tail) triple into (preceding, future).

    Returns None for relations outside the six selected sequential types.
    """
    if relation not in SEQUENTIAL_RELATIONS:
        return None
    if relation in SEQUENTIAL_FORWARD:
        return SequentialPair(preceding=head, future=tail, source_relation=relation)
    return SequentialPair(preceding=tail, future=head, source_relation=relation)


def normalize_sequential(
    raw_triples: Sequence[tuple[str, str, str]],
) -> tuple[list[SequentialPair], int]:
    """Normalize a raw triple list; returns (pairs, skipped_count)."""
    pairs: list[SequentialPair] = []
    skipped = 0
    for head, relation, tail in raw_triples:
        pair = sequentialize_triple(head, relation, tail)
        if pair is None:
            skipped += 1
        else:
            pairs.append(pair)
    return pairs, skipped


# -- negative sampling ----------------------------------------------------------


def negative_sample_im(
    triple: InferentialTriple,
    corpus: Sequence[InferentialTriple],
    rng: Rng,
    vocab: Vocab,
) -> ImExample:
    """Mismatched pair for the contrastive discriminator.

    The replacement tail is drawn uniformly from other tails under the same
    relation; if the relation has no alternative tail, any other tail is used
    (with a warning).
    """
    same_rel = sorted(
        {t.tail_event for t in corpus if t.relation == triple.relation}
        - {triple.tail_event}
    )
    if not same_rel:
        log.warning(
            "no alternative tail for relation %s; sampling across relations",
            triple.relation.value,
        )
        same_rel = sorted({t.tail_event for t in corpus} - {triple.tail_event})
        if not same_rel:
            raise ValueError("corpus has no alternative tails to sample")
    fake_tail = same_rel[rng.choice_index(len(same_rel))]
    return ImExample(
        x_ids=tuple(build_im_input(vocab, triple.head_event, triple.relation)),
        y_ids=tuple(vocab.encode(fake_tail)),
        label=NEGATIVE_LABEL,
        relation=triple.relation,
        head_event=triple.head_event,
        tail_event=fake_tail,
    )


def make_im_examples(
    triples: Sequence[InferentialTriple], vocab: Vocab, rng: Rng
) -> list[ImExample]:
    """One positive plus one sampled negative per triple (exact 50/50 labels)."""
    examples: list[ImExample] = []
    for i, triple in enumerate(triples):
        examples.append(
            ImExample(
                x_ids=tuple(build_im_input(vocab, triple.head_event, triple.relation)),
                y_ids=tuple(vocab.encode(triple.tail_event)),
                label=POSITIVE_LABEL,
                relation=triple.relation,
                head_event=triple.head_event,
                tail_event=triple.tail_event,
            )
        )
        examples.append(negative_sample_im(triple, triples, rng.child(i), vocab))
    return examples


def negative_sample_feg(
    example: FegExample, event_pool: Sequence[str], rng: Rng
) -> FegExample:
    """Replace the target with a different event drawn from the whole pool."""
    alternatives = sorted(set(event_pool) - {example.target})
    if not alternatives:
        raise ValueError("event pool has no alternative targets")
    fake = alternatives[rng.choice_index(len(alternatives))]
    return FegExample(
        history=example.history,
        current=example.current,
        target=fake,
        label=NEGATIVE_LABEL,
    )


# -- jsonl readers / writers ----------------------------------------------------


def write_jsonl(path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_jsonl(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def load_inferential(path) -> list[InferentialTriple]:
    """Read {"head", "relation", "tail"} records into triples."""
    triples = []
    for rec in read_jsonl(path):
        triples.append(
            InferentialTriple(
                head_event=rec["head"],
                relation=Relation.from_name(rec["relation"]),
                tail_event=rec["tail"],
            )
        )
    return triples


def load_sequential(path) -> tuple[list[SequentialPair], int]:
    """Read sequential records; raw triples are normalized, skips counted."""
    pairs: list[SequentialPair] = []
    skipped = 0
    for rec in read_jsonl(path):
        if "preceding" in rec:
            pairs.append(
                SequentialPair(
                    preceding=rec["preceding"],
                    future=rec["future"],
                    source_relation=rec.get("relation", ""),
                )
            )
            continue
        pair = sequentialize_triple(rec["head"], rec["relation"], rec["tail"])
        if pair is None:
            skipped += 1
        else:
            pairs.append(pair)
    return pairs, skipped


def load_stories(path) -> list[list[str]]:
    return [rec["events"] for rec in read_jsonl(path)]
