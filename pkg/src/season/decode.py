"""Salience-guided inference: degree prediction, guidance and beam search."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .corpus import (
    BOS, EOS, PAD, SENT, RawDocument, Vocabulary, detokenize, encode_document, tokenize,
)
from .errors import MissingReference
from .metrics import rouge_scores
from .model import SeasonModel, hard_degrees, make_batch
from .salience import ThresholdSpec, assign_degrees, score_document
from .tensor import no_grad

log = logging.getLogger(__name__)

ESTIMATIONS = ("soft", "hard", "gold")


@dataclass
class DecodeConfig:
    beam_size: int = 5
    length_penalty: float = 1.5
    block_ngram: int = 3
    min_len: int = 20
    max_len: int = 128
    tau: float = 0.5
    estimation: str = "soft"

    def __post_init__(self):
        if self.beam_size < 1:
            raise ValueError("beam_size must be >= 1")
        if self.block_ngram == 1 or self.block_ngram < 0:
            raise ValueError("block_ngram must be >= 2, or 0 to disable")
        if self.min_len >= self.max_len:
            raise ValueError("min_len must be smaller than max_len")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.estimation not in ESTIMATIONS:
            raise ValueError(f"estimation must be one of {ESTIMATIONS}")


@dataclass
class BeamHypothesis:
    tokens: list[int]
    logprob_sum: float = 0.0
    finished: bool = False
    ngram_set: set = field(default_factory=set)

    def extend(self, token: int, logprob: float, n: int, eos: int = EOS) -> "BeamHypothesis":
        tokens = self.tokens + [token]
        grams = self.ngram_set
        if n and len(tokens) >= n:
            grams = grams | {tuple(tokens[-n:])}
        return BeamHypothesis(tokens, self.logprob_sum + logprob, token == eos, grams)

    @property
    def generated(self) -> list[int]:
        """Tokens after BOS, without a trailing EOS."""
        out = self.tokens[1:]
        return out[:-1] if self.finished else out


def score_hypothesis(hyp: BeamHypothesis, length_penalty: float) -> float:
    """Sum of log-probabilities divided by (generated length) ** penalty."""
    length = len(hyp.tokens) - 1
    if length < 1:
        raise ValueError("hypothesis has no generated tokens")
    return hyp.logprob_sum / length ** length_penalty


def blocked_tokens(hyp: BeamHypothesis | Sequence[int], n: int) -> set[int]:
    """Tokens that would complete an n-gram already present in the hypothesis."""
    if n < 2:
        raise ValueError("n must be >= 2")
    tokens = hyp.tokens if isinstance(hyp, BeamHypothesis) else list(hyp)
    if len(tokens) < n - 1:
        return set()
    prefix = tuple(tokens[len(tokens) - n + 1:])
    return {tokens[i + n - 1] for i in range(len(tokens) - n + 1)
            if tuple(tokens[i:i + n - 1]) == prefix}


def _log_softmax(x):
    z = x - x.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def _best_reachable(hyp, config):
    # future log-probs are <= 0, so the best final score comes from adding
    # nothing and using whichever allowed length flatters the sum most
    s = hyp.logprob_sum
    lo, hi = len(hyp.tokens), config.max_len + 1
    return max(s / lo ** config.length_penalty, s / hi ** config.length_penalty)


def beam_search_fn(step_fn: Callable[[list[list[int]]], np.ndarray], config: DecodeConfig,
                   bos: int = BOS, eos: int = EOS, banned: Sequence[int] = ()) -> BeamHypothesis:
    """Beam search over an arbitrary next-token scorer.

    ``step_fn`` maps K prefixes to a (K, V) array of logits. Each step ranks
    every legal expansion of every live hypothesis by accumulated log-prob
    (ties: lower token id, then earlier hypothesis) and keeps the top
    ``beam_size``; expansions ending in EOS retire to the finished pool. EOS is
    illegal before ``min_len`` generated tokens and the only legal token once
    ``max_len`` is reached. Returns the best finished hypothesis under
    ``score_hypothesis``.
    """
    n = config.block_ngram
    live = [BeamHypothesis([bos])]
    finished: list[BeamHypothesis] = []
    banned = list(banned)
    while live:
        logp = _log_softmax(np.asarray(step_fn([h.tokens for h in live]), dtype=np.float64))
        for i, hyp in enumerate(live):
            row = logp[i]
            if banned:
                row[banned] = -np.inf
            length = len(hyp.tokens) - 1
            if length < config.min_len:
                row[eos] = -np.inf
            if length >= config.max_len:
                keep = row[eos]
                row[:] = -np.inf
                row[eos] = keep if np.isfinite(keep) else 0.0
            if n:
                blocked = blocked_tokens(hyp, n)
                if blocked:
                    trial = row.copy()
                    trial[list(blocked)] = -np.inf
                    if np.isfinite(trial).any():
                        row[:] = trial
                    else:
                        log.debug("all tokens blocked at length %d; relaxing n-gram blocking",
                                  length)
        scores = logp + np.array([h.logprob_sum for h in live])[:, None]
        hyp_idx, tok_idx = np.nonzero(np.isfinite(scores))
        if hyp_idx.size == 0:
            break
        vals = scores[hyp_idx, tok_idx]
        order = np.lexsort((hyp_idx, tok_idx, -vals))[: config.beam_size]
        new_live = []
        for k in order:
            i, t = int(hyp_idx[k]), int(tok_idx[k])
            child = live[i].extend(t, float(logp[i, t]), n, eos)
            (finished if t == eos else new_live).append(child)
        live = new_live
        if finished and live:
            best = max(score_hypothesis(h, config.length_penalty) for h in finished)
            if best >= max(_best_reachable(h, config) for h in live):
                break
    if not finished:
        finished = live or [BeamHypothesis([bos, eos], 0.0, True)]
    best_hyp, best_score = None, -math.inf
    for h in finished:
        s = score_hypothesis(h, config.length_penalty)
        if s > best_score:
            best_hyp, best_score = h, s
    return best_hyp


def greedy_search_fn(step_fn, config: DecodeConfig, bos=BOS, eos=EOS, banned=()):
    return beam_search_fn(step_fn, _with(config, beam_size=1), bos, eos, banned)


def _with(config, **changes):
    values = dict(config.__dict__)
    values.update(changes)
    return DecodeConfig(**values)


# ---------------------------------------------------------------- model-level

BANNED = (PAD, BOS, SENT)


def beam_search(model: SeasonModel, enc, token_salience, config: DecodeConfig) -> list[int]:
    """Generated token ids (no BOS/EOS) for one encoded document."""
    def step(prefixes):
        return model.decode_step(prefixes, enc, token_salience)

    return beam_search_fn(step, config, banned=BANNED).generated


def _gold_degrees(doc: RawDocument, thresholds: ThresholdSpec | None):
    if doc.degrees is not None:
        return list(doc.degrees)
    if not tokenize(doc.summary):
        raise MissingReference(f"document {doc.id!r} has no reference for gold guidance")
    if thresholds is None or not thresholds.cutoffs:
        raise MissingReference(f"document {doc.id!r} is unlabeled and no cutoffs were given")
    return assign_degrees(score_document(doc), thresholds.cutoffs)


def generate_one(model: SeasonModel, vocab: Vocabulary, doc: RawDocument, config: DecodeConfig,
                 thresholds: ThresholdSpec | None = None, max_src: int = 512,
                 with_probs: bool = False) -> dict:
    encoded = encode_document(doc, vocab, max_src, 2)
    degrees = None
    if config.estimation == "gold":
        degrees = [_gold_degrees(doc, thresholds)[: encoded.n_sentences]]
    with no_grad():
        batch = make_batch([encoded], degrees)
        enc = model.encode(batch)
        token_sal, probs = model.guidance(enc, config.estimation, config.tau, batch.degrees)
        ids = beam_search(model, enc, token_sal, config)
    p = probs.data[0, : encoded.n_sentences]
    record = {
        "id": doc.id,
        "summary": detokenize([vocab.tokens[i] for i in ids]),
        "degrees": [int(d) for d in hard_degrees(p)],
    }
    if with_probs:
        record["degree_probs"] = p.tolist()
    return record


def generate(model: SeasonModel, vocab: Vocabulary, docs: list[RawDocument],
             config: DecodeConfig, thresholds: ThresholdSpec | None = None, max_src: int = 512,
             with_probs: bool = False) -> list[dict]:
    """One record ``{id, summary, degrees[, degree_probs]}`` per document."""
    if config.estimation == "gold":
        bad = [d.id for d in docs if d.degrees is None and not tokenize(d.summary)]
        if bad:
            raise MissingReference(f"gold estimation needs references: {', '.join(bad)}")
    return [generate_one(model, vocab, d, config, thresholds, max_src, with_probs) for d in docs]


def evaluate_model(model, vocab, docs, config: DecodeConfig, max_src: int = 512,
                   thresholds=None) -> dict[str, float]:
    """Mean ROUGE F1 of generated summaries against the references."""
    records = generate(model, vocab, docs, config, thresholds, max_src)
    totals = {"rouge1": 0.0, "rouge2": 0.0, "rougeL": 0.0}
    for rec, doc in zip(records, docs):
        for k, v in rouge_scores(tokenize(rec["summary"]), tokenize(doc.summary)).items():
            totals[k] += v
    return {k: v / len(docs) for k, v in totals.items()}
