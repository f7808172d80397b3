"""Corpus-level scoring of generated summaries against references."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .corpus import RawDocument, tokenize
from .errors import DuplicateId, IdMismatch, ParseError
from .metrics import fragment_stats, rouge_scores

ROUGE_KEYS = ("rouge1", "rouge2", "rougeL")


@dataclass
class EvaluationReport:
    n_documents: int
    rouge: dict[str, float]
    avg_length: float
    density_splits: list[dict]

    def to_json(self) -> dict:
        return {
            "n_documents": self.n_documents,
            "rouge": self.rouge,
            "avg_length": self.avg_length,
            "density_splits": self.density_splits,
        }


def load_predictions(path) -> dict[str, str]:
    """``id -> summary`` from a generation JSONL file."""
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                rid, summary = str(rec["id"]), rec["summary"]
            except (ValueError, KeyError, TypeError) as exc:
                raise ParseError(f"{path}:{lineno}: {exc}", lineno) from None
            if rid in out:
                raise DuplicateId(f"{path}:{lineno}: duplicate id {rid!r}")
            out[rid] = summary
    if not out:
        raise ParseError(f"{path}: no predictions", 0)
    return out


def _mean_rouge(pairs):
    totals = dict.fromkeys(ROUGE_KEYS, 0.0)
    for cand, ref in pairs:
        for k, v in rouge_scores(cand, ref).items():
            totals[k] += v
    return {k: v / len(pairs) for k, v in totals.items()} if pairs else dict.fromkeys(ROUGE_KEYS, 0.0)


def evaluate(predictions: dict[str, str], references: list[RawDocument], n_splits: int = 3
             ) -> EvaluationReport:
    """Mean ROUGE F1, average generated length and a density split.

    Documents are ranked by the fragment density of their reference against
    the article and cut into ``n_splits`` equal parts (the first parts take
    one extra document when the count does not divide evenly). Ids are sorted
    first, so the result does not depend on file order.
    """
    ref_ids = {d.id for d in references}
    if set(predictions) != ref_ids:
        missing = sorted(ref_ids - set(predictions))
        extra = sorted(set(predictions) - ref_ids)
        raise IdMismatch(f"prediction ids differ from references "
                         f"(missing {missing[:5]}, unexpected {extra[:5]})")
    docs = sorted(references, key=lambda d: d.id)
    pairs, densities = [], []
    for d in docs:
        ref = tokenize(d.summary)
        pairs.append((tokenize(predictions[d.id]), ref))
        densities.append(fragment_stats(tokenize(d.article), ref).density if ref else 0.0)
    # stable sort: equal densities keep id order
    order = sorted(range(len(docs)), key=lambda i: (densities[i], docs[i].id))
    splits = []
    for k, chunk in enumerate(np.array_split(np.array(order, dtype=np.int64), n_splits)):
        idx = chunk.tolist()
        splits.append({
            "split": k + 1,
            "n_documents": len(idx),
            "density_min": min(densities[i] for i in idx) if idx else None,
            "density_max": max(densities[i] for i in idx) if idx else None,
            "ids": [docs[i].id for i in idx],
            "rouge": _mean_rouge([pairs[i] for i in idx]),
        })
    return EvaluationReport(
        n_documents=len(docs),
        rouge=_mean_rouge(pairs),
        avg_length=float(np.mean([len(c) for c, _ in pairs])),
        density_splits=splits,
    )
