"""Oracle salience labels, corpus percentile cutoffs and threshold search."""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .corpus import RawDocument, sentence_tokens, tokenize
from .errors import EmptyReference, InsufficientGrid, MissingReference
from .metrics import rouge_l

DEFAULT_PERCENTILES = (0.15, 0.50)
DEFAULT_GRID = tuple(round(0.05 * k, 2) for k in range(1, 20))


@dataclass
class SalienceAllocation:
    scores: list[float]
    degrees: list[int]
    n_degrees: int


@dataclass
class ThresholdSpec:
    """Cumulative-from-top fractions and the score cutoffs they realize."""

    percentiles: list[float]
    cutoffs: list[float] = field(default_factory=list)

    @property
    def n_degrees(self) -> int:
        return len(self.percentiles) + 1

    def to_json(self) -> dict:
        return {"percentiles": list(self.percentiles), "cutoffs": list(self.cutoffs),
                "n_degrees": self.n_degrees}

    @classmethod
    def from_json(cls, obj) -> "ThresholdSpec":
        spec = cls(list(obj["percentiles"]), list(obj.get("cutoffs", [])))
        if "n_degrees" in obj and obj["n_degrees"] != spec.n_degrees:
            raise ValueError("n_degrees does not match the number of percentiles")
        return spec

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2)

    @classmethod
    def load(cls, path) -> "ThresholdSpec":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def score_sentences(sentences: Sequence[Sequence[str]], reference: Sequence[str]) -> list[float]:
    """ROUGE-L F1 of every sentence against the reference summary."""
    if not reference:
        raise EmptyReference("reference summary has no tokens")
    return [rouge_l(list(s), list(reference)).f1 for s in sentences]


def score_document(doc: RawDocument) -> list[float]:
    reference = tokenize(doc.summary)
    if not reference:
        raise MissingReference(f"document {doc.id!r} has no reference summary")
    return score_sentences(sentence_tokens(doc.article), reference)


def percentile_cutoffs(all_scores: Sequence[float], percentiles: Sequence[float]) -> list[float]:
    """Nearest-rank cutoffs counted from the top of the descending sort."""
    if not all_scores:
        raise ValueError("no scores")
    _check_percentiles(percentiles)
    ranked = sorted(all_scores, reverse=True)
    m = len(ranked)
    # 1e-9 guards against p*m landing a hair above an integer
    return [ranked[max(1, math.ceil(p * m - 1e-9)) - 1] for p in percentiles]


def _check_percentiles(percentiles):
    if any(not 0.0 < p < 1.0 for p in percentiles):
        raise ValueError(f"percentiles must lie in (0, 1): {list(percentiles)}")
    if any(b <= a for a, b in zip(percentiles, percentiles[1:])):
        raise ValueError(f"percentiles must be strictly increasing: {list(percentiles)}")


def assign_degree(score: float, cutoffs: Sequence[float]) -> int:
    # a score equal to a cutoff joins the more salient degree
    return 1 + sum(1 for c in cutoffs if c > score)


def assign_degrees(scores: Sequence[float], cutoffs: Sequence[float]) -> list[int]:
    if any(b > a for a, b in zip(cutoffs, cutoffs[1:])):
        raise ValueError("cutoffs must be non-increasing")
    return [assign_degree(s, cutoffs) for s in scores]


def label_corpus(docs: list[RawDocument], percentiles=DEFAULT_PERCENTILES,
                 thresholds: ThresholdSpec | None = None) -> tuple[list[RawDocument], ThresholdSpec]:
    """Score every sentence and assign corpus-wide degrees.

    Cutoffs are computed from the pooled sentence scores unless an explicit
    ``thresholds`` with realized cutoffs is given.
    """
    missing = [d.id for d in docs if not tokenize(d.summary)]
    if missing:
        raise MissingReference(f"documents without reference summary: {', '.join(missing)}")
    scored = [score_document(d) for d in docs]
    if thresholds is not None and thresholds.cutoffs:
        spec = ThresholdSpec(list(thresholds.percentiles), list(thresholds.cutoffs))
    else:
        pcts = list(thresholds.percentiles) if thresholds is not None else list(percentiles)
        pooled = [s for doc_scores in scored for s in doc_scores]
        spec = ThresholdSpec(pcts, percentile_cutoffs(pooled, pcts))
    labeled = []
    for doc, scores in zip(docs, scored):
        labeled.append(RawDocument(
            id=doc.id, article=doc.article, summary=doc.summary,
            salience_scores=scores, degrees=assign_degrees(scores, spec.cutoffs),
        ))
    return labeled, spec


def relabel(docs: list[RawDocument], percentiles: Sequence[float]) -> list[list[int]]:
    """Degrees for already-scored documents at new percentiles."""
    pooled = [s for d in docs for s in d.salience_scores]
    cutoffs = percentile_cutoffs(pooled, percentiles)
    return [assign_degrees(d.salience_scores, cutoffs) for d in docs]


def smooth_labels(gold: int, n_degrees: int, beta: float, mode: str = "adjacent") -> list[float]:
    """Smoothed target distribution over degrees 1..L (returned 0-indexed).

    ``adjacent`` shares ``beta`` between the neighbouring degrees (all of it
    to the single neighbour at an edge); ``uniform`` spreads it over every
    other degree.
    """
    if not 1 <= gold <= n_degrees:
        raise ValueError(f"gold degree {gold} outside 1..{n_degrees}")
    if not 0.0 <= beta < 1.0:
        raise ValueError("beta must lie in [0, 1)")
    dist = [0.0] * n_degrees
    dist[gold - 1] = 1.0 - beta
    if mode == "adjacent":
        others = [d for d in (gold - 1, gold + 1) if 1 <= d <= n_degrees]
    elif mode == "uniform":
        others = [d for d in range(1, n_degrees + 1) if d != gold]
    else:
        raise ValueError(f"unknown smoothing mode {mode!r}")
    for d in others:
        dist[d - 1] += beta / len(others)
    return dist


@dataclass
class SearchStep:
    spec: ThresholdSpec
    value: float
    candidates: dict[float, float]


def greedy_threshold_search(all_scores: Sequence[float],
                            eval_fn: Callable[[tuple[float, ...]], float],
                            grid: Sequence[float] = DEFAULT_GRID,
                            max_degrees: int = 3) -> list[SearchStep]:
    """Add one grid fraction per extra degree, keeping earlier picks fixed.

    ``eval_fn`` receives the sorted tuple of fractions for the candidate
    labeling and returns a score to maximize. Ties go to the smaller fraction.
    """
    grid = list(grid)
    _check_percentiles(grid)
    if max_degrees < 2:
        raise ValueError("max_degrees must be >= 2")
    if len(grid) < max_degrees - 1:
        raise InsufficientGrid(
            f"grid has {len(grid)} fractions, {max_degrees} degrees need {max_degrees - 1}")
    chosen: list[float] = []
    steps = []
    for _ in range(2, max_degrees + 1):
        candidates = {}
        best_p, best_v = None, -math.inf
        for p in grid:
            if p in chosen:
                continue
            v = float(eval_fn(tuple(sorted(chosen + [p]))))
            candidates[p] = v
            if v > best_v:
                best_p, best_v = p, v
        if best_p is None:
            raise InsufficientGrid("grid exhausted")
        chosen.append(best_p)
        pcts = sorted(chosen)
        steps.append(SearchStep(ThresholdSpec(pcts, percentile_cutoffs(all_scores, pcts)),
                                best_v, candidates))
    return steps


def proxy_eval(docs: list[RawDocument]) -> Callable[[tuple[float, ...]], float]:
    """Model-free evaluation of a labeling for threshold search.

    Each document's summary is approximated by its sentences in the most
    salient degree present; the return value is the mean ROUGE-L F1 of those
    extracts against the references.
    """
    sents = [sentence_tokens(d.article) for d in docs]
    refs = [tokenize(d.summary) for d in docs]
    cache = {}

    def evaluate(percentiles):
        key = tuple(percentiles)
        if key not in cache:
            all_degrees = relabel(docs, percentiles)
            total = 0.0
            for doc_sents, ref, degrees in zip(sents, refs, all_degrees):
                top = min(degrees)
                extract = [t for s, d in zip(doc_sents, degrees) if d == top for t in s]
                total += rouge_l(extract, ref).f1
            cache[key] = total / len(docs)
        return cache[key]

    return evaluate


def salience_stats(docs: list[RawDocument], spec: ThresholdSpec | None = None) -> dict:
    """Degree fractions, per-document histograms and degree-1 positions."""
    n_degrees = spec.n_degrees if spec else max(max(d.degrees) for d in docs)
    counts = Counter()
    per_doc = {}
    positions = Counter()
    relative = Counter()
    for d in docs:
        hist = Counter(d.degrees)
        counts.update(hist)
        per_doc[d.id] = [hist.get(k, 0) for k in range(1, n_degrees + 1)]
        n = len(d.degrees)
        for j, deg in enumerate(d.degrees, start=1):
            if deg == 1:
                positions[j] += 1
                # decile of the document the sentence falls in
                relative[min(9, (j - 1) * 10 // n)] += 1
    total = sum(counts.values())
    report = {
        "n_documents": len(docs),
        "n_sentences": total,
        "n_degrees": n_degrees,
        "degree_counts": [counts.get(k, 0) for k in range(1, n_degrees + 1)],
        "degree_fractions": [counts.get(k, 0) / total if total else 0.0
                             for k in range(1, n_degrees + 1)],
        "per_document": per_doc,
        "degree1_positions": {str(k): v for k, v in sorted(positions.items())},
        "degree1_relative_deciles": [relative.get(k, 0) for k in range(10)],
    }
    if spec is not None:
        report["percentiles"] = list(spec.percentiles)
        report["cutoffs"] = list(spec.cutoffs)
    return report
