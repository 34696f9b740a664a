"""Generation metrics and human-evaluation aggregation statistics.

Text metrics operate on whitespace-tokenized strings.  BLEU is corpus-level
modified n-gram precision with brevity penalty and add-epsilon smoothing on
zero precisions (desk-scale outputs are short enough to zero out higher
orders otherwise); scores are reported in [0, 1] -- multiply by 100 for the
conventional display scale.  Rank statistics use average ranks for ties
(Spearman) and the plain pair-counting tau (Kendall tau-a).
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional, Sequence

BLEU_EPSILON = 1e-9
ROUGE_BETA = 1.2
UNAVAILABLE = ("meteor", "bertscore")  # need external resources; never computed


def _tokens(text: str) -> list[str]:
    return text.split()


def _ngrams(tokens: Sequence[str], n: int) -> list[tuple[str, ...]]:
    return [tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)]


# -- fluency -------------------------------------------------------------------


def perplexity(per_token_nlls: Sequence[float]) -> float:
    """exp of the mean negative log-likelihood; 1.0 for a perfect model."""
    if len(per_token_nlls) == 0:
        raise ValueError("perplexity needs at least one NLL value")
    vals = [float(v) for v in per_token_nlls]
    if any(math.isnan(v) or math.isinf(v) for v in vals):
        raise ValueError("perplexity got a non-finite NLL")
    return math.exp(sum(vals) / len(vals))


# -- n-gram overlap ---------------------------------------------------------------


def bleu_n(
    candidates: Sequence[str], references: Sequence[Sequence[str]], n: int
) -> float:
    """Corpus-level BLEU-n over (candidate, reference list) pairs."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if len(candidates) != len(references):
        raise ValueError("candidates and references must align")
    total_cand_len = 0
    total_ref_len = 0
    matched = [0] * n
    possible = [0] * n
    for cand, refs in zip(candidates, references):
        c_tokens = _tokens(cand)
        ref_token_lists = [_tokens(r) for r in refs]
        if not ref_token_lists:
            raise ValueError("every candidate needs at least one reference")
        total_cand_len += len(c_tokens)
        # effective reference length: closest to the candidate, shorter wins ties
        total_ref_len += min(
            (abs(len(r) - len(c_tokens)), len(r)) for r in ref_token_lists
        )[1]
        for order in range(1, n + 1):
            c_counts = Counter(_ngrams(c_tokens, order))
            max_ref = Counter()
            for r in ref_token_lists:
                for gram, count in Counter(_ngrams(r, order)).items():
                    max_ref[gram] = max(max_ref[gram], count)
            matched[order - 1] += sum(
                min(count, max_ref[gram]) for gram, count in c_counts.items()
            )
            possible[order - 1] += sum(c_counts.values())
    if total_cand_len == 0:
        return 0.0
    log_sum = 0.0
    for order in range(n):
        p = matched[order] / possible[order] if possible[order] else 0.0
        log_sum += math.log(p if p > 0 else BLEU_EPSILON)
    brevity = (
        1.0
        if total_cand_len > total_ref_len
        else math.exp(1.0 - total_ref_len / total_cand_len)
    )
    return brevity * math.exp(log_sum / n)


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        curr = [0]
        for j, y in enumerate(b, start=1):
            curr.append(prev[j - 1] + 1 if x == y else max(prev[j], curr[j - 1]))
        prev = curr
    return prev[-1]


def rouge_l(candidate: str, reference: str, beta: float = ROUGE_BETA) -> float:
    """LCS-based F-measure, recall-weighted by beta."""
    c, r = _tokens(candidate), _tokens(reference)
    if not c or not r:
        return 0.0
    lcs = _lcs_length(c, r)
    if lcs == 0:
        return 0.0
    precision = lcs / len(c)
    recall = lcs / len(r)
    return (1 + beta**2) * precision * recall / (recall + beta**2 * precision)


def cider(
    candidates: Sequence[str], references: Sequence[Sequence[str]], max_n: int = 4
) -> float:
    """TF-IDF n-gram cosine similarity, averaged over n = 1..max_n, scaled x10.

    IDF counts the number of instances whose reference set contains each
    n-gram.  With a single instance every IDF is log(1) = 0, all vectors are
    zero, and the score degenerates to 0.
    """
    if len(candidates) != len(references):
        raise ValueError("candidates and references must align")
    if not candidates:
        raise ValueError("cider needs at least one instance")
    num_instances = len(candidates)
    scores_per_n = []
    for n in range(1, max_n + 1):
        doc_freq: Counter = Counter()
        for refs in references:
            grams = set()
            for r in refs:
                grams.update(_ngrams(_tokens(r), n))
            doc_freq.update(grams)
        idf = {g: math.log(num_instances / df) for g, df in doc_freq.items()}

        def vec(text: str) -> dict:
            return {
                g: count * idf.get(g, 0.0)
                for g, count in Counter(_ngrams(_tokens(text), n)).items()
            }

        def cosine(u: dict, v: dict) -> float:
            nu = math.sqrt(sum(x * x for x in u.values()))
            nv = math.sqrt(sum(x * x for x in v.values()))
            if nu == 0.0 or nv == 0.0:
                return 0.0
            dot = sum(val * v[g] for g, val in u.items() if g in v)
            return dot / (nu * nv)

        total = 0.0
        for cand, refs in zip(candidates, references):
            cv = vec(cand)
            total += sum(cosine(cv, vec(r)) for r in refs) / len(refs)
        scores_per_n.append(total / num_instances)
    return 10.0 * sum(scores_per_n) / len(scores_per_n)


# -- diversity / redundancy ---------------------------------------------------------


def distinct_n(texts: Sequence[str], n: int) -> float:
    """Distinct n-grams over all generated n-grams (pooled); 0 when none."""
    grams: list[tuple[str, ...]] = []
    for text in texts:
        grams.extend(_ngrams(_tokens(text), n))
    if not grams:
        return 0.0
    return len(set(grams)) / len(grams)


def repetition_n(stories: Sequence[str], n: int) -> float:
    """Mean per-story fraction of n-gram occurrences repeating an earlier one."""
    if not stories:
        raise ValueError("repetition needs at least one story")
    ratios = []
    for story in stories:
        grams = _ngrams(_tokens(story), n)
        if not grams:
            ratios.append(0.0)
            continue
        seen: set = set()
        repeats = 0
        for g in grams:
            if g in seen:
                repeats += 1
            seen.add(g)
        ratios.append(repeats / len(grams))
    return sum(ratios) / len(ratios)


# -- human-evaluation aggregation -----------------------------------------------------


def hit_at_k(rankings: Sequence[int], k: int) -> float:
    """Percentage of rankings landing in the top k."""
    if not rankings:
        raise ValueError("hit_at_k needs at least one ranking")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    return 100.0 * sum(1 for r in rankings if r <= k) / len(rankings)


def _average_ranks(values: Sequence[float]) -> list[float]:
    """Ranks (1-based) with ties assigned the average of their positions."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2 + 1
        for t in range(i, j + 1):
            ranks[order[t]] = avg
        i = j + 1
    return ranks


def spearman_rho(ranks_a: Sequence[float], ranks_b: Sequence[float]) -> float:
    """Rank correlation: Pearson correlation of average-tied ranks."""
    if len(ranks_a) != len(ranks_b) or len(ranks_a) < 2:
        raise ValueError("spearman needs two aligned sequences of length >= 2")
    ra, rb = _average_ranks(ranks_a), _average_ranks(ranks_b)
    n = len(ra)
    ma = sum(ra) / n
    mb = sum(rb) / n
    cov = sum((x - ma) * (y - mb) for x, y in zip(ra, rb))
    va = math.sqrt(sum((x - ma) ** 2 for x in ra))
    vb = math.sqrt(sum((y - mb) ** 2 for y in rb))
    if va == 0.0 or vb == 0.0:
        raise ValueError("spearman undefined for constant rankings")
    return cov / (va * vb)


def kendall_tau(ranks_a: Sequence[float], ranks_b: Sequence[float]) -> float:
    """Kendall tau-a: (concordant - discordant) / total pairs; ties score 0."""
    if len(ranks_a) != len(ranks_b) or len(ranks_a) < 2:
        raise ValueError("kendall needs two aligned sequences of length >= 2")
    n = len(ranks_a)
    numerator = 0
    for i in range(n):
        for j in range(i + 1, n):
            da = ranks_a[i] - ranks_a[j]
            db = ranks_b[i] - ranks_b[j]
            product = da * db
            if product > 0:
                numerator += 1
            elif product < 0:
                numerator -= 1
    return numerator / (n * (n - 1) / 2)


# -- the evaluation report -------------------------------------------------------------


@dataclass
class EvalReport:
    """Per-metric scalars plus per-example breakdowns and corpus metadata."""

    metrics: dict[str, Optional[float]]
    unavailable: list[str]
    per_example: list[dict]
    meta: dict = field(default_factory=dict)

    _RANGES = {
        "ppl": (1.0, math.inf),
        "bleu_1": (0.0, 1.0),
        "bleu_2": (0.0, 1.0),
        "bleu_4": (0.0, 1.0),
        "rouge_l": (0.0, 1.0),
        "cider": (0.0, math.inf),
        "distinct_1": (0.0, 1.0),
        "distinct_2": (0.0, 1.0),
        "repetition_4": (0.0, 1.0),
        "hit_at_1": (0.0, 100.0),
        "hit_at_2": (0.0, 100.0),
        "spearman_rho": (-1.0, 1.0),
        "kendall_tau": (-1.0, 1.0),
    }

    def validate(self) -> None:
        for name, value in self.metrics.items():
            if value is None:
                continue
            lo, hi = self._RANGES.get(name, (-math.inf, math.inf))
            if not (lo <= value <= hi):
                raise ValueError(f"metric {name}={value} outside [{lo}, {hi}]")

    def to_json(self) -> str:
        payload = {
            "metrics": self.metrics,
            "unavailable": self.unavailable,
            "per_example": self.per_example,
            "meta": self.meta,
        }
        return json.dumps(payload, sort_keys=True, indent=2)


def evaluate_generations(
    predictions: Sequence[str],
    references: Sequence[str],
    per_token_nlls: Optional[Sequence[float]] = None,
    rankings: Optional[Sequence[int]] = None,
    annotator_ranks: Optional[tuple[Sequence[float], Sequence[float]]] = None,
    meta: Optional[dict] = None,
) -> EvalReport:
    """Compute the full metric battery for aligned prediction/reference lists."""
    if len(predictions) != len(references):
        raise ValueError("predictions and references must align")
    if not predictions:
        raise ValueError("nothing to evaluate")
    ref_lists = [[r] for r in references]
    metrics: dict[str, Optional[float]] = {
        "bleu_1": bleu_n(predictions, ref_lists, 1),
        "bleu_2": bleu_n(predictions, ref_lists, 2),
        "bleu_4": bleu_n(predictions, ref_lists, 4),
        "rouge_l": sum(rouge_l(p, r) for p, r in zip(predictions, references))
        / len(predictions),
        "cider": cider(predictions, ref_lists),
        "distinct_1": distinct_n(predictions, 1),
        "distinct_2": distinct_n(predictions, 2),
        "repetition_4": repetition_n(predictions, 4),
        "ppl": perplexity(per_token_nlls) if per_token_nlls else None,
        "hit_at_1": hit_at_k(rankings, 1) if rankings else None,
        "hit_at_2": hit_at_k(rankings, 2) if rankings else None,
        "spearman_rho": spearman_rho(*annotator_ranks) if annotator_ranks else None,
        "kendall_tau": kendall_tau(*annotator_ranks) if annotator_ranks else None,
    }
    for name in UNAVAILABLE:
        metrics[name] = None
    per_example = [
        {"index": i, "bleu_1": bleu_n([p], [[r]], 1), "rouge_l": rouge_l(p, r)}
        for i, (p, r) in enumerate(zip(predictions, references))
    ]
    report = EvalReport(
        metrics=metrics,
        unavailable=list(UNAVAILABLE) + [k for k, v in metrics.items() if v is None and k not in UNAVAILABLE],
        per_example=per_example,
        meta=meta or {"count": len(predictions)},
    )
    report.validate()
    return report
