"""Tokenization, relations, and training-corpus construction."""

from .examples import (
    FegExample,
    ImExample,
    InferentialTriple,
    SequentialPair,
    build_gm_input,
    build_im_input,
    build_prompt_input,
    build_seq_input,
    load_inferential,
    load_sequential,
    load_stories,
    make_im_examples,
    negative_sample_feg,
    negative_sample_im,
    normalize_sequential,
    read_jsonl,
    segment,
    sequentialize_triple,
    unfold_story,
    write_jsonl,
)
from .relations import (
    CANONICAL_RELATIONS,
    SEQUENTIAL_FORWARD,
    SEQUENTIAL_RELATIONS,
    SEQUENTIAL_REVERSED,
    Relation,
    reformulate_relation,
)
from .vocab import (
    BOS_ID,
    EOS_ID,
    PAD_ID,
    SPECIAL_IDS,
    SPECIAL_TOKENS,
    UNK_ID,
    Vocab,
    detokenize_words,
    word_tokenize,
)

__all__ = [
    "BOS_ID",
    "CANONICAL_RELATIONS",
    "EOS_ID",
    "FegExample",
    "ImExample",
    "InferentialTriple",
    "PAD_ID",
    "Relation",
    "SEQUENTIAL_FORWARD",
    "SEQUENTIAL_RELATIONS",
    "SEQUENTIAL_REVERSED",
    "SPECIAL_IDS",
    "SPECIAL_TOKENS",
    "SequentialPair",
    "UNK_ID",
    "Vocab",
    "build_gm_input",
    "build_im_input",
    "build_prompt_input",
    "build_seq_input",
    "detokenize_words",
    "load_inferential",
    "load_sequential",
    "load_stories",
    "make_im_examples",
    "negative_sample_feg",
    "negative_sample_im",
    "normalize_sequential",
    "read_jsonl",
    "segment",
    "sequentialize_triple",
    "unfold_story",
    "word_tokenize",
    "write_jsonl",
]
