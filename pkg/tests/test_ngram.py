import math
from collections import Counter

import pytest

import kn_reference as oracle
from issue_surprisal.errors import DomainError, EmptyCorpus, EmptyDocument, UnknownToken
from issue_surprisal.infotheory import ProbabilityDistribution, entropy
from issue_surprisal.ngram import (
    BOS,
    EOS,
    SMOOTHING_NONE,
    KneserNeyLanguageModel,
    KneserNeyModel,
    SurprisalScore,
    estimate_discounts,
    train,
    train_excluding,
)
from issue_surprisal.textprep import TokenSequence


def seqs(sentences, repo="acme/widget"):
    return [
        TokenSequence(tokens=tuple(s), source=(repo, i + 1))
        for i, s in enumerate(sentences)
    ]


CORPUS_SMALL = [
    ["the", "app", "crashes", "on", "load"],
    ["the", "app", "hangs", "on", "save"],
    ["crashes", "happen", "on", "load", "sometimes"],
]

CORPUS_REPEATS = [
    ["a", "b", "a", "b"],
    ["a", "b", "c"],
    ["b", "a", "b", "a", "a"],
]

CORPUS_DEGENERATE = [["x", "x", "x", "x"]]

FIXTURE_CORPORA = [CORPUS_SMALL, CORPUS_REPEATS, CORPUS_DEGENERATE]


class TestDiscountEstimation:
    def test_worked_example(self):
        assert estimate_discounts((4, 2, 1, 1)) == pytest.approx((0.5, 1.25, 1.0))

    def test_degenerate_fallback(self):
        assert estimate_discounts((0, 5, 2, 1)) == (0.5, 1.0, 1.5)
        assert estimate_discounts((3, 2, 1, 0)) == (0.5, 1.0, 1.5)

    def test_second_worked_example(self):
        d1, d2, d3 = estimate_discounts((1, 1, 1, 1))
        assert d1 == pytest.approx(1 / 3)
        assert d2 == pytest.approx(1.0)
        assert d3 == pytest.approx(5 / 3)

    def test_clamped_to_legal_ranges(self):
        for coc in [(1, 50, 1, 1), (50, 1, 50, 1), (2, 2, 1, 40)]:
            d1, d2, d3 = estimate_discounts(coc)
            assert 0 <= d1 <= 1 and 0 <= d2 <= 2 and 0 <= d3 <= 3


class TestTrainBasics:
    def test_empty_corpus_rejected(self):
        with pytest.raises(EmptyCorpus):
            train([], 3)

    def test_order_out_of_range(self):
        with pytest.raises(DomainError):
            train(seqs(CORPUS_SMALL), 11)
        with pytest.raises(DomainError):
            train(seqs(CORPUS_SMALL), 0)

    def test_vocabulary_excludes_markers(self):
        model = train(seqs(CORPUS_SMALL), 3)
        assert BOS not in model.vocabulary and EOS not in model.vocabulary
        assert model.vocabulary == {w for s in CORPUS_SMALL for w in s}

    def test_unknown_token_raises(self):
        model = train(seqs(CORPUS_SMALL), 3)
        with pytest.raises(UnknownToken):
            model.prob("zebra", ["the"])


def observed_contexts(model, order):
    ctxs = set()
    for gram in model.counts.counts[order]:
        if gram[-1] != BOS:
            ctxs.add(gram[:-1])
    return ctxs


def unobserved_contexts(model, order, limit=12):
    # Context words need not be in vocabulary: unseen histories back off.
    alphabet = sorted(model.vocabulary) + [f"novel{i}" for i in range(12)]
    seen = observed_contexts(model, order)
    out = []
    for a in alphabet:
        for b in reversed(alphabet):
            ctx = tuple(([a, b] * order)[: order - 1])
            if ctx and ctx not in seen and ctx not in out:
                out.append(ctx)
            if len(out) >= limit:
                return out
    return out


class TestNormalization:
    @pytest.mark.parametrize("corpus", FIXTURE_CORPORA)
    @pytest.mark.parametrize("order", [1, 2, 3, 4, 5])
    def test_observed_contexts_sum_to_one(self, corpus, order):
        model = train(seqs(corpus), order)
        for ctx in observed_contexts(model, order):
            total = sum(model.prob(w, ctx) for w in model.predictable)
            assert total == pytest.approx(1.0, abs=1e-6)

    @pytest.mark.parametrize("corpus", [CORPUS_SMALL, CORPUS_REPEATS])
    @pytest.mark.parametrize("order", [2, 3, 5])
    def test_unobserved_contexts_sum_to_one(self, corpus, order):
        model = train(seqs(corpus), order)
        ctxs = unobserved_contexts(model, order)
        assert len(ctxs) >= 10 or len(model.vocabulary) < 4
        for ctx in ctxs:
            total = sum(model.prob(w, ctx) for w in model.predictable)
            assert total == pytest.approx(1.0, abs=1e-6)

    def test_positivity(self):
        model = train(seqs(CORPUS_SMALL), 3)
        for ctx in list(observed_contexts(model, 3)) + unobserved_contexts(model, 3):
            for w in model.predictable:
                assert model.prob(w, ctx) > 0


class TestOracleEquivalence:
    @pytest.mark.parametrize("corpus", [CORPUS_SMALL, CORPUS_REPEATS])
    @pytest.mark.parametrize("order", [1, 2, 3, 4])
    def test_every_conditional_matches_reference(self, corpus, order):
        model = train(seqs(corpus), order)
        symbols = oracle.predictable_symbols(corpus)
        contexts = set()
        for k in range(0, order):
            for sentence in corpus:
                padded = oracle.pad(sentence, order)
                for i in range(len(padded) - k):
                    contexts.add(tuple(padded[i:i + k]))
        contexts |= set(unobserved_contexts(model, order, limit=5))
        for ctx in sorted(contexts):
            for w in symbols:
                expected = oracle.prob(corpus, order, w, ctx)
                assert model.prob(w, ctx) == pytest.approx(expected, abs=1e-9), (ctx, w)

    def test_bigram_frequency_effect(self):
        corpus = [["a", "b", "a", "b"]]
        model = train(seqs(corpus), 2)
        assert model.prob("b", ["a"]) > model.prob("a", ["a"])
        assert model.prob("b", ["a"]) == pytest.approx(
            oracle.prob(corpus, 2, "b", ["a"]), abs=1e-9)

    def test_unigram_argmax_is_most_frequent(self):
        corpus = [["a", "a", "a", "b", "c", "a", "b"]]
        model = train(seqs(corpus), 1)
        best = max(model.vocabulary, key=lambda w: model.prob(w))
        assert best == "a"
        for w in model.vocabulary:
            assert model.prob(w) == pytest.approx(oracle.prob(corpus, 1, w, []), abs=1e-9)


class TestScoring:
    def test_repeated_token_mle_scores_zero_bits(self):
        corpus = seqs([["alpha", "alpha", "alpha"]])
        model = train(corpus, 3, smoothing=SMOOTHING_NONE)
        score = model.sequence_cross_entropy(corpus[0])
        assert score.cross_entropy_bits_per_token == 0.0

    def test_mle_unigram_self_score_equals_empirical_entropy(self):
        corpus = seqs([["a", "b", "b", "c", "c", "c"]])
        model = train(corpus, 1, smoothing=SMOOTHING_NONE)
        score = model.sequence_cross_entropy(corpus[0], mode="literal_unigram")
        empirical = ProbabilityDistribution.from_counts(Counter(corpus[0].tokens))
        assert score.cross_entropy_bits_per_token == pytest.approx(entropy(empirical), abs=1e-9)

    def test_monotone_frequency_effect(self):
        train_corpus = seqs([["common"] * 20 + ["rare"]])
        model = train(train_corpus, 1)
        frequent_doc = TokenSequence(tokens=("common",) * 5, source=("r", 98))
        rare_doc = TokenSequence(tokens=("rare",) * 5, source=("r", 99))
        low = model.sequence_cross_entropy(frequent_doc).cross_entropy_bits_per_token
        high = model.sequence_cross_entropy(rare_doc).cross_entropy_bits_per_token
        assert low < high

    def test_trigram_scores_match_term_by_term_reference(self):
        corpus5 = [
            ["build", "fails", "on", "windows"],
            ["build", "fails", "on", "linux", "sometimes"],
            ["tests", "hang", "on", "windows"],
            ["docs", "mention", "the", "build"],
            ["crash", "when", "parsing", "docs"],
        ]
        model = train(seqs(corpus5), 3)
        for seq in seqs(corpus5):
            expected_bits = 0.0
            history = [BOS, BOS] + list(seq.tokens)
            for t, word in enumerate(seq.tokens):
                p = oracle.prob(corpus5, 3, word, history[t:t + 2])
                expected_bits += -math.log2(p)
            got = model.sequence_cross_entropy(seq).cross_entropy_bits_per_token
            assert got == pytest.approx(expected_bits / len(seq.tokens), abs=1e-9)

    def test_empty_sequence_rejected(self):
        model = train(seqs(CORPUS_SMALL), 2)
        with pytest.raises(ValueError):
            TokenSequence(tokens=("",), source=("r", 1))
        with pytest.raises(EmptyDocument):
            model.sequence_cross_entropy(_empty_sequence())

    def test_score_corpus_order_stable(self):
        corpus = seqs(CORPUS_SMALL)
        model = train(corpus, 2)
        scores = model.score_corpus(corpus)
        assert [s.number for s in scores] == [1, 2, 3]
        assert all(s.cross_entropy_bits_per_token >= 0 for s in scores)

    def test_determinism(self):
        corpus = seqs(CORPUS_SMALL)
        a = train(corpus, 3).score_corpus(corpus)
        b = train(corpus, 3).score_corpus(corpus)
        assert a == b


def _empty_sequence():
    seq = TokenSequence(tokens=("x",), source=("r", 1))
    object.__setattr__(seq, "tokens", ())
    return seq


class TestExclusion:
    def test_exclude_repository(self):
        corpus = seqs(CORPUS_SMALL, repo="acme/widget") + seqs(CORPUS_REPEATS, repo="acme/other")
        model = train_excluding(corpus, 2, exclude_repo="acme/other")
        same = train(seqs(CORPUS_SMALL, repo="acme/widget"), 2)
        assert model.vocabulary == same.vocabulary
        assert model.counts.counts == same.counts.counts

    def test_exclude_issue(self):
        corpus = seqs(CORPUS_SMALL)
        model = train_excluding(corpus, 2, exclude_issue=("acme/widget", 2))
        same = train([corpus[0], corpus[2]], 2)
        assert model.counts.counts == same.counts.counts


class TestSerialization:
    def test_round_trip_probabilities(self, tmp_path):
        model = train(seqs(CORPUS_SMALL), 3)
        path = tmp_path / "model.tsv"
        model.save_tsv(path)
        loaded = KneserNeyModel.load_tsv(path)
        assert loaded.order == model.order
        assert loaded.vocabulary == model.vocabulary
        assert loaded.discounts == model.discounts
        for ctx in observed_contexts(model, 3):
            for w in sorted(model.vocabulary):
                assert loaded.prob(w, ctx) == pytest.approx(model.prob(w, ctx), abs=1e-12)

    def test_file_is_byte_stable(self, tmp_path):
        model = train(seqs(CORPUS_SMALL), 2)
        a, b = tmp_path / "a.tsv", tmp_path / "b.tsv"
        model.save_tsv(a)
        train(seqs(CORPUS_SMALL), 2).save_tsv(b)
        assert a.read_bytes() == b.read_bytes()


class TestEstimatorApi:
    def test_fit_and_score_samples(self):
        corpus = seqs(CORPUS_SMALL)
        lm = KneserNeyLanguageModel(order=2)
        assert lm.fit(corpus) is lm
        scores = lm.score_samples(corpus)
        assert len(scores) == 3 and all(s >= 0 for s in scores)

    def test_get_params_round_trip(self):
        lm = KneserNeyLanguageModel(order=4)
        params = lm.get_params()
        assert params["order"] == 4
        clone = KneserNeyLanguageModel(**params)
        assert clone.get_params() == params
