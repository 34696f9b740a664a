"""Word-level tokenization and the shared vocabulary.

A word tokenizer (lowercase, punctuation split off as separate tokens)
replaces subword encoding: desk-scale vocabularies are small and word-level
tokens keep metric computation and test oracles transparent.
"""

from __future__ import annotations

import re
from typing import Iterable, Sequence

BOS = "<s>"
EOS = "</s>"
PAD = "<pad>"
UNK = "<unk>"

BOS_ID = 0
EOS_ID = 1
PAD_ID = 2
UNK_ID = 3

SPECIAL_TOKENS = (BOS, EOS, PAD, UNK)
SPECIAL_IDS = frozenset(range(len(SPECIAL_TOKENS)))

_TOKEN_RE = re.compile(r"[a-z0-9]+|[^a-z0-9\s]")


def word_tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, split punctuation into its own tokens."""
    return _TOKEN_RE.findall(text.lower())


def detokenize_words(words: Sequence[str]) -> str:
    """Inverse of :func:`word_tokenize` for already punctuation-spaced text."""
    return " ".join(words)


class Vocab:
    """Bijective token<->id map with the four special tokens pinned to 0-3."""

    def __init__(self, tokens: Sequence[str]):
        self.id_to_token: list[str] = list(SPECIAL_TOKENS) + [
            t for t in tokens if t not in SPECIAL_TOKENS
        ]
        self.token_to_id: dict[str, int] = {t: i for i, t in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self) -> int:
        return len(self.id_to_token)

    @classmethod
    def build(cls, texts: Iterable[str]) -> "Vocab":
        """Collect every distinct word (min frequency 1), sorted for determinism."""
        seen: set[str] = set()
        for text in texts:
            seen.update(word_tokenize(text))
        return cls(sorted(seen))

    def encode(self, text: str) -> list[int]:
        """Token ids for ``text``; unknown words map to <unk>."""
        return [self.token_to_id.get(w, UNK_ID) for w in word_tokenize(text)]

    def decode(self, ids: Sequence[int], keep_special: bool = False) -> str:
        words = []
        for i in ids:
            if not keep_special and i in SPECIAL_IDS:
                continue
            words.append(self.id_to_token[i])
        return detokenize_words(words)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for token in self.id_to_token:
                fh.write(token + "\n")

    @classmethod
    def load(cls, path) -> "Vocab":
        with open(path, encoding="utf-8") as fh:
            tokens = [line.rstrip("\n") for line in fh]
        if tokens[: len(SPECIAL_TOKENS)] != list(SPECIAL_TOKENS):
            raise ValueError(f"vocab file {path} does not begin with the special tokens")
        return cls(tokens[len(SPECIAL_TOKENS) :])
