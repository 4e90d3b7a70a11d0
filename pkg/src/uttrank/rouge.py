"""ROUGE-1/2/L overlap metrics.

Serves two roles: the relevance oracle that turns a reference summary into
per-utterance training labels, and the extraction-quality metric reported by
the evaluation harness. No stemming and no stopword removal, so scores are
deterministic and dependency-free; documented here so results stay comparable
across runs.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass

from .errors import ValidationError

__all__ = [
    "RougeScore",
    "tokenize",
    "ngram_counts",
    "rouge_n",
    "lcs_length",
    "rouge_l",
    "gold_relevance",
    "rank_descending",
    "gold_order",
]

# Lowercase alphanumeric runs; underscore is punctuation here, digits kept.
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

TokenSequence = list[str]


@dataclass(frozen=True)
class RougeScore:
    """Precision/recall/F1 triple, each in [0, 1]."""

    precision: float
    recall: float
    f1: float

    @staticmethod
    def from_pr(precision: float, recall: float) -> "RougeScore":
        denom = precision + recall
        f1 = 2.0 * precision * recall / denom if denom > 0 else 0.0
        return RougeScore(precision, recall, f1)


def tokenize(text: str) -> TokenSequence:
    """Lowercase and split on any non-alphanumeric run."""
    return _TOKEN_RE.findall(text.lower())


def ngram_counts(tokens: TokenSequence, n: int) -> Counter:
    """Multiset of contiguous n-grams; empty when the sequence is shorter than n."""
    if n < 1:
        raise ValidationError(f"n-gram order must be >= 1, got {n}")
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _overlap(candidate: Counter, reference: Counter) -> int:
    return sum(min(count, reference[gram]) for gram, count in candidate.items())


def rouge_n(candidate: str, reference: str, n: int) -> RougeScore:
    """Clipped n-gram overlap; zero denominators yield zero scores."""
    cand = ngram_counts(tokenize(candidate), n)
    ref = ngram_counts(tokenize(reference), n)
    overlap = _overlap(cand, ref)
    cand_total = sum(cand.values())
    ref_total = sum(ref.values())
    precision = overlap / cand_total if cand_total else 0.0
    recall = overlap / ref_total if ref_total else 0.0
    return RougeScore.from_pr(precision, recall)


def lcs_length(a: TokenSequence, b: TokenSequence) -> int:
    """Longest common subsequence length via the classic DP, O(len(a)*len(b))."""
    if not a or not b:
        return 0
    # Single-row DP; prev holds the row for a[:i].
    prev = [0] * (len(b) + 1)
    for x in a:
        curr = [0] * (len(b) + 1)
        for j, y in enumerate(b, start=1):
            if x == y:
                curr[j] = prev[j - 1] + 1
            else:
                curr[j] = max(prev[j], curr[j - 1])
        prev = curr
    return prev[-1]


def rouge_l(candidate: str, reference: str) -> RougeScore:
    """LCS-based ROUGE; zero denominators yield zero scores."""
    cand = tokenize(candidate)
    ref = tokenize(reference)
    lcs = lcs_length(cand, ref)
    precision = lcs / len(cand) if cand else 0.0
    recall = lcs / len(ref) if ref else 0.0
    return RougeScore.from_pr(precision, recall)


def gold_relevance(utterance: str, gold_summary: str) -> float:
    """Relevance label: mean of ROUGE-1, ROUGE-2, and ROUGE-L F1 vs the summary.

    The mean of the three reported metrics is the least arbitrary composite
    and matches how extractors are scored on all three downstream.
    """
    return (
        rouge_n(utterance, gold_summary, 1).f1
        + rouge_n(utterance, gold_summary, 2).f1
        + rouge_l(utterance, gold_summary).f1
    ) / 3.0


def rank_descending(values) -> list[int]:
    """Indices sorted by value descending, ties broken by ascending position."""
    return sorted(range(len(values)), key=lambda i: (-values[i], i))


def gold_order(utterances, gold_summary: str) -> list[int]:
    """Permutation of utterance positions by gold relevance, best first.

    Accepts raw strings or objects with a .text attribute. Ties fall back to
    transcript position so training labels are deterministic.
    """
    if len(utterances) == 0:
        raise ValidationError("gold_order requires at least one utterance")
    texts = [u if isinstance(u, str) else u.text for u in utterances]
    relevances = [gold_relevance(t, gold_summary) for t in texts]
    return rank_descending(relevances)
