"""ROUGE-1/2/L and extractive fragment statistics."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

from . import kernels
from .errors import EmptySummary


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, overlap, n_cand, n_ref):
        if n_cand == 0 or n_ref == 0:
            return cls(0.0, 0.0, 0.0)
        p = overlap / n_cand
        r = overlap / n_ref
        f = 2 * p * r / (p + r) if p + r > 0 else 0.0
        return cls(p, r, f)


@dataclass(frozen=True)
class AbstractivenessScore:
    coverage: float
    density: float


def _shared_ids(*seqs):
    """Map hashable tokens of several sequences onto a common int alphabet."""
    table = {}
    return [[table.setdefault(t, len(table)) for t in s] for s in seqs]


def lcs_length(a, b) -> int:
    """Length of a longest common subsequence of two token sequences."""
    if not a or not b:
        return 0
    ia, ib = _shared_ids(a, b)
    return kernels.lcs_length(ia, ib)


def ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(candidate, reference, n: int) -> PRF:
    if n < 1:
        raise ValueError("n must be >= 1")
    cand, ref = ngrams(list(candidate), n), ngrams(list(reference), n)
    overlap = sum((cand & ref).values())
    return PRF.from_counts(overlap, sum(cand.values()), sum(ref.values()))


def rouge_l(candidate, reference) -> PRF:
    """Sentence-level ROUGE-L (one LCS over the whole sequences)."""
    return PRF.from_counts(lcs_length(candidate, reference), len(candidate), len(reference))


def rouge_scores(candidate, reference) -> dict[str, float]:
    """F1 of ROUGE-1, ROUGE-2 and ROUGE-L."""
    return {
        "rouge1": rouge_n(candidate, reference, 1).f1,
        "rouge2": rouge_n(candidate, reference, 2).f1,
        "rougeL": rouge_l(candidate, reference).f1,
    }


def fragments(article, summary) -> list[int]:
    """Greedy left-to-right maximal shared fragments, as lengths.

    At each summary position the longest article match starting there is
    taken; unmatched positions advance by one.
    """
    if not summary or not article:
        return []
    ia, isum = _shared_ids(article, summary)
    return kernels.greedy_fragments(ia, isum)


def fragment_stats(article, summary) -> AbstractivenessScore:
    if not summary:
        raise EmptySummary("summary has no tokens")
    frags = fragments(article, summary)
    m = len(summary)
    return AbstractivenessScore(
        coverage=sum(frags) / m,
        density=sum(f * f for f in frags) / m,
    )
