"""Synthetic news-like corpora with known salient sentences.

Each article has a handful of sentences over a pseudo-word vocabulary; one or
two of them are salient and the reference summary copies them (sometimes with
a word dropped). Salient sentences usually open with a cue word, so salience
is learnable from the article alone, but not perfectly.
"""

from __future__ import annotations

import itertools

import numpy as np

from .corpus import RawDocument

_ONSETS = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"]
_VOWELS = ["a", "e", "i", "o", "u"]
CUE_WORDS = ("officials", "announced", "reported", "confirmed")


def word_pool(n: int) -> list[str]:
    """``n`` distinct pronounceable pseudo-words, deterministic."""
    sylls = [o + v for o, v in itertools.product(_ONSETS, _VOWELS)]
    words = []
    for a, b in itertools.product(sylls, sylls):
        if a != b:
            words.append(a + b)
        if len(words) == n:
            break
    return words


def _sentence(rng, pool, n_words):
    idx = rng.choice(len(pool), size=n_words, replace=False)
    return [pool[i] for i in idx]


def make_corpus(n_docs: int, seed: int = 0, min_sents: int = 4, max_sents: int = 8,
                min_words: int = 6, max_words: int = 10, n_words: int = 150,
                cue_rate: float = 0.85, paraphrase_rate: float = 0.3,
                prefix: str = "doc") -> list[RawDocument]:
    rng = np.random.default_rng(seed)
    pool = word_pool(n_words)
    docs = []
    for k in range(n_docs):
        n_sent = int(rng.integers(min_sents, max_sents + 1))
        sents = [_sentence(rng, pool, int(rng.integers(min_words, max_words + 1)))
                 for _ in range(n_sent)]
        n_salient = int(rng.integers(1, 3))
        salient = sorted(rng.choice(n_sent, size=n_salient, replace=False).tolist())
        for j in range(n_sent):
            is_salient = j in salient
            if rng.random() < (cue_rate if is_salient else 1.0 - cue_rate):
                sents[j] = [CUE_WORDS[int(rng.integers(len(CUE_WORDS)))]] + sents[j]
        summary = []
        for j in salient:
            words = list(sents[j])
            if len(words) > 3 and rng.random() < paraphrase_rate:
                del words[int(rng.integers(1, len(words)))]
            summary.append(words)
        docs.append(RawDocument(
            id=f"{prefix}-{k:04d}",
            article=" ".join(_render(s) for s in sents),
            summary=" ".join(_render(s) for s in summary),
        ))
    return docs


def _render(words):
    return " ".join([words[0].capitalize()] + words[1:]) + "."
