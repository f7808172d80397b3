import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from season import tensor as T
from season.corpus import EOS, RawDocument, build_vocab, encode_document
from season.decode import (
    BeamHypothesis, DecodeConfig, beam_search, beam_search_fn, blocked_tokens, generate,
    greedy_search_fn, score_hypothesis,
)
from season.errors import MissingReference
from season.model import ModelConfig, SeasonModel, make_batch
from season.salience import label_corpus
from season.synthetic import make_corpus


def toy_scorer(seed, vocab=3, order=2):
    """Logits depend on the last ``order`` tokens through a random table."""
    rng = np.random.default_rng(seed)
    table = rng.normal(0, 2.0, size=(vocab,) * order + (vocab,))

    def step(prefixes):
        out = []
        for p in prefixes:
            ctx = tuple((list(p)[-order:] if len(p) >= order else [0] * (order - len(p)) + list(p)))
            out.append(table[ctx])
        return np.array(out)

    return step


def log_softmax(x):
    z = x - x.max()
    return z - np.log(np.exp(z).sum())


def exhaustive(step, config, bos, eos, vocab):
    """Best length-penalized sequence over every legal completion."""
    best, best_seq = -np.inf, None
    for length in range(config.min_len, config.max_len + 1):
        for body in itertools.product([t for t in range(vocab) if t not in (bos, eos)], repeat=length):
            seq = [bos, *body, eos]
            total = 0.0
            for i in range(1, len(seq)):
                total += log_softmax(step([seq[:i]])[0])[seq[i]]
            score = total / (len(seq) - 1) ** config.length_penalty
            if score > best + 1e-12:
                best, best_seq = score, seq
    return best, best_seq


class TestHelpers:
    def test_blocked_tokens(self):
        assert blocked_tokens([5, 6, 7, 5, 6], 3) == {7}
        assert blocked_tokens([5, 6], 3) == set()
        assert blocked_tokens([1, 1, 1], 2) == {1}

    def test_blocked_needs_n(self):
        with pytest.raises(ValueError):
            blocked_tokens([1, 2], 1)

    def test_score(self):
        h = BeamHypothesis([1, 5, 2], -4.0, True)
        assert score_hypothesis(h, 1.0) == -2.0
        assert h.generated == [5]

    @pytest.mark.parametrize("penalty,want", [(0.0, -4.0), (1.0, -1.0), (1.5, -0.5)])
    def test_score_examples(self, penalty, want):
        h = BeamHypothesis([1, 5, 6, 7, 2], -4.0, True)
        assert score_hypothesis(h, penalty) == pytest.approx(want)

    def test_longer_wins_at_equal_negative_logprob(self):
        short = BeamHypothesis([1] + [5] * 4, -3.0)
        long = BeamHypothesis([1] + [5] * 8, -3.0)
        assert score_hypothesis(short, 1.0) < score_hypothesis(long, 1.0)

    @pytest.mark.parametrize("kw", [
        {"beam_size": 0}, {"block_ngram": 1}, {"min_len": 5, "max_len": 5}, {"tau": 0.0},
        {"estimation": "oracle"},
    ])
    def test_config_validation(self, kw):
        with pytest.raises(ValueError):
            DecodeConfig(**kw)


class TestBeamFunction:
    @pytest.mark.parametrize("seed", range(10))
    def test_full_beam_is_exhaustive(self, seed):
        # vocab {0: BOS, 1: content, 2: EOS}; BOS is banned as output
        cfg = DecodeConfig(beam_size=64, length_penalty=1.5, block_ngram=0, min_len=1, max_len=4)
        step = toy_scorer(seed)
        best = beam_search_fn(step, cfg, bos=0, eos=2, banned=[0])
        want, seq = exhaustive(step, cfg, 0, 2, 3)
        assert best.tokens == seq
        assert score_hypothesis(best, 1.5) == pytest.approx(want)

    def test_min_len_respected(self):
        # with penalty 1 the shortest legal sequence wins: -30/4 > -40/5
        cfg = DecodeConfig(beam_size=3, length_penalty=1.0, block_ngram=0, min_len=3, max_len=6)
        eos_loving = lambda ps: np.tile([0.0, 0.0, 10.0], (len(ps), 1))
        best = beam_search_fn(eos_loving, cfg, bos=0, eos=2, banned=[0])
        assert len(best.generated) == 3

    def test_max_len_forces_eos(self):
        cfg = DecodeConfig(beam_size=2, block_ngram=0, min_len=0, max_len=4)
        never_eos = lambda ps: np.tile([0.0, 5.0, -50.0], (len(ps), 1))
        best = beam_search_fn(never_eos, cfg, bos=0, eos=2, banned=[0])
        assert best.finished and len(best.generated) == 4

    def test_blocking_relaxed_when_everything_is_blocked(self):
        cfg = DecodeConfig(beam_size=1, block_ngram=2, min_len=3, max_len=5)
        # only token 1 is ever allowed before min_len: the bigram (1, 1)
        # repeats, so blocking must relax rather than dead-end
        one_only = lambda ps: np.tile([0.0, 1.0, 0.0], (len(ps), 1))
        best = beam_search_fn(one_only, cfg, bos=0, eos=2, banned=[0])
        assert best.generated[:3] == [1, 1, 1]

    @settings(deadline=None, max_examples=40)
    @given(st.integers(0, 10_000), st.integers(2, 4))
    def test_no_repeated_ngrams(self, seed, n):
        cfg = DecodeConfig(beam_size=3, block_ngram=n, min_len=2, max_len=12)
        best = beam_search_fn(toy_scorer(seed, vocab=6), cfg, bos=0, eos=1, banned=[0])
        toks = best.tokens
        grams = [tuple(toks[i:i + n]) for i in range(len(toks) - n + 1)]
        assert len(grams) == len(set(grams))

    @pytest.mark.parametrize("seed", range(10))
    def test_beam_one_is_greedy(self, seed):
        cfg = DecodeConfig(beam_size=1, block_ngram=0, min_len=2, max_len=10)
        step = toy_scorer(seed, vocab=5)
        toks = [0]
        while True:
            logits = step([toks])[0].copy()
            logits[0] = -np.inf
            if len(toks) - 1 < cfg.min_len:
                logits[1] = -np.inf
            if len(toks) - 1 >= cfg.max_len:
                toks.append(1)
                break
            toks.append(int(np.argmax(logits)))
            if toks[-1] == 1:
                break
        assert greedy_search_fn(step, cfg, bos=0, eos=1, banned=[0]).tokens == toks


@pytest.fixture(scope="module")
def small_model():
    docs = make_corpus(6, seed=2)
    docs, spec = label_corpus(docs)
    vocab = build_vocab(docs, 500)
    cfg = ModelConfig(vocab_size=len(vocab), d_model=16, n_heads=2, n_enc_layers=1,
                      n_dec_layers=1, ffn_dim=32, dropout=0.0, max_positions=128)
    model = SeasonModel(cfg, seed=0)
    rng = np.random.default_rng(1)
    for p in model.params.values():
        p.data += rng.normal(0, 0.2, p.shape)
    return model, vocab, docs, spec


class TestModelDecoding:
    def test_generate_records(self, small_model):
        model, vocab, docs, spec = small_model
        cfg = DecodeConfig(beam_size=2, min_len=2, max_len=8)
        records = generate(model, vocab, docs[:2], cfg, with_probs=True)
        for rec, doc in zip(records, docs):
            assert rec["id"] == doc.id
            assert 2 <= len(rec["summary"].split()) <= 8
            assert len(rec["degrees"]) == len(rec["degree_probs"]) == len(doc.degrees)
            assert all(abs(sum(p) - 1) < 1e-9 for p in rec["degree_probs"])

    def test_gold_requires_reference(self, small_model):
        model, vocab, _, _ = small_model
        cfg = DecodeConfig(estimation="gold", min_len=1, max_len=4)
        with pytest.raises(MissingReference):
            generate(model, vocab, [RawDocument("x", "a b.", "")], cfg)

    def test_gold_uses_cutoffs_for_unlabeled(self, small_model):
        model, vocab, docs, spec = small_model
        cfg = DecodeConfig(estimation="gold", beam_size=2, min_len=1, max_len=4)
        raw = RawDocument(docs[0].id, docs[0].article, docs[0].summary)
        assert (generate(model, vocab, [raw], cfg, spec)
                == generate(model, vocab, [docs[0]], cfg, spec))

    def test_beam_one_matches_manual_greedy(self, small_model):
        model, vocab, docs, _ = small_model
        cfg = DecodeConfig(beam_size=1, block_ngram=0, min_len=2, max_len=8)
        for doc in docs:
            e = encode_document(doc, vocab)
            with T.no_grad():
                batch = make_batch([e])
                enc = model.encode(batch)
                sal, _ = model.guidance(enc, "soft", cfg.tau)
            toks = [1]
            while len(toks) - 1 < cfg.max_len:
                logits = model.decode_step([toks], enc, sal)[0]
                logits[[0, 1, 4]] = -np.inf
                if len(toks) - 1 < cfg.min_len:
                    logits[EOS] = -np.inf
                toks.append(int(np.argmax(logits)))
                if toks[-1] == EOS:
                    break
            want = [t for t in toks[1:] if t != EOS]
            assert beam_search(model, enc, sal, cfg) == want
