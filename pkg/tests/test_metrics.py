import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from season import kernels
from season.errors import EmptySummary
from season.metrics import PRF, fragment_stats, fragments, lcs_length, rouge_l, rouge_n, rouge_scores


def brute_lcs(a, b):
    """Longest subsequence of ``a`` that is also a subsequence of ``b``."""
    def is_subseq(s, t):
        it = iter(t)
        return all(x in it for x in s)

    for k in range(min(len(a), len(b)), 0, -1):
        if any(is_subseq(c, b) for c in itertools.combinations(a, k)):
            return k
    return 0


def brute_rouge_n(cand, ref, n):
    grams_c = [tuple(cand[i:i + n]) for i in range(len(cand) - n + 1)]
    grams_r = [tuple(ref[i:i + n]) for i in range(len(ref) - n + 1)]
    overlap = sum(min(grams_c.count(g), grams_r.count(g)) for g in set(grams_c))
    if not grams_c or not grams_r:
        return 0.0, 0.0, 0.0
    p, r = overlap / len(grams_c), overlap / len(grams_r)
    return p, r, (2 * p * r / (p + r) if p + r else 0.0)


def brute_fragments(article, summary):
    out, i = [], 0
    while i < len(summary):
        best = 0
        for j in range(len(article)):
            k = 0
            while i + k < len(summary) and j + k < len(article) and summary[i + k] == article[j + k]:
                k += 1
            best = max(best, k)
        if best:
            out.append(best)
            i += best
        else:
            i += 1
    return out


seqs = st.lists(st.sampled_from("abcd"), max_size=9)


class TestLCS:
    @pytest.mark.parametrize("a,b,expected", [
        ("abcbdab", "bdcaba", 4),
        ("", "abc", 0),
        ("abc", "abc", 3),
        ("abc", "def", 0),
    ])
    def test_examples(self, a, b, expected):
        assert lcs_length(list(a), list(b)) == expected

    @given(seqs, seqs)
    def test_matches_brute_force(self, a, b):
        assert lcs_length(a, b) == brute_lcs(a, b)

    @given(seqs, seqs)
    def test_symmetric_and_bounded(self, a, b):
        n = lcs_length(a, b)
        assert n == lcs_length(b, a)
        assert 0 <= n <= min(len(a), len(b))

    def test_word_tokens(self):
        assert lcs_length("the cat sat".split(), "the dog sat".split()) == 2


class TestRouge:
    def test_identical(self):
        toks = "a b c".split()
        assert rouge_scores(toks, toks) == {"rouge1": 1.0, "rouge2": 1.0, "rougeL": 1.0}

    def test_clipped_counts(self):
        # "the" appears 3 times in the candidate but only once in the reference
        prf = rouge_n("the the the".split(), "the cat".split(), 1)
        assert prf == PRF(1 / 3, 1 / 2, pytest.approx(0.4))

    def test_empty_sides_score_zero(self):
        assert rouge_n([], ["a"], 1).f1 == 0.0
        assert rouge_l(["a"], []).f1 == 0.0

    def test_bad_n(self):
        with pytest.raises(ValueError):
            rouge_n(["a"], ["a"], 0)

    @given(seqs, seqs, st.integers(1, 3))
    def test_rouge_n_matches_brute_force(self, cand, ref, n):
        got = rouge_n(cand, ref, n)
        p, r, f = brute_rouge_n(cand, ref, n)
        assert got.precision == pytest.approx(p)
        assert got.recall == pytest.approx(r)
        assert got.f1 == pytest.approx(f)

    @given(seqs, seqs)
    def test_scores_in_unit_interval(self, cand, ref):
        for v in rouge_scores(cand, ref).values():
            assert 0.0 <= v <= 1.0

    @given(seqs, seqs)
    def test_rouge_l_bounded_by_rouge1(self, cand, ref):
        # every LCS token is also a clipped unigram match
        assert rouge_l(cand, ref).f1 <= rouge_n(cand, ref, 1).f1 + 1e-12


class TestFragments:
    def test_example(self):
        article = "a b c d e".split()
        summary = "a b x d e".split()
        assert fragments(article, summary) == [2, 2]
        s = fragment_stats(article, summary)
        assert s.coverage == pytest.approx(4 / 5)
        assert s.density == pytest.approx(8 / 5)

    def test_empty_summary(self):
        with pytest.raises(EmptySummary):
            fragment_stats(["a"], [])

    @given(seqs, seqs)
    def test_matches_brute_force(self, article, summary):
        assert fragments(article, summary) == brute_fragments(article, summary)

    @given(seqs, seqs.filter(bool))
    def test_coverage_bounds(self, article, summary):
        s = fragment_stats(article, summary)
        assert 0.0 <= s.coverage <= 1.0
        assert s.coverage <= s.density <= len(summary) * s.coverage + 1e-12

    def test_copy_has_full_density(self):
        toks = "x y z".split()
        assert fragment_stats(toks, toks).density == 3.0


@pytest.mark.parametrize("backend", kernels.available_backends())
class TestBackends:
    @given(st.lists(st.integers(0, 3), max_size=12), st.lists(st.integers(0, 3), max_size=12))
    def test_lcs_agrees_with_python(self, backend, a, b):
        assert kernels.lcs_length(a, b, backend=backend) == kernels.lcs_length(a, b, backend="python")

    @given(st.lists(st.integers(0, 3), max_size=12), st.lists(st.integers(0, 3), max_size=12))
    def test_fragments_agree_with_python(self, backend, a, b):
        assert (kernels.greedy_fragments(a, b, backend=backend)
                == kernels.greedy_fragments(a, b, backend="python"))

    def test_unknown_backend(self, backend):
        with pytest.raises(ValueError):
            kernels.lcs_length([1], [1], backend="fortran")
