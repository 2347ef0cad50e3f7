import math

import numpy as np
import pytest
from scipy import stats as spstats

from ctxpred.corpus import build_vocab
from ctxpred.ngram import train_ngram
from ctxpred.stats import add_intercept, fit_logistic
from ctxpred.synth import (
    FEATURE_NAMES,
    SimulatedFeatureProvider,
    SpeakerPolicy,
    generate_markov_corpus,
    simulate_substitutions,
    softmax_choice,
)

BETA_STAR = {
    "logp_unigram": 0.8,
    "logp_forward": 0.2,
    "sem_dist": -2.5,
    "phon_dist": -0.4,
    "cond_pmi": -0.6,
}


class TestMarkovCorpus:
    def test_invalid_matrix_rejected(self):
        with pytest.raises(ValueError, match="sum to 1"):
            generate_markov_corpus(3, [[0.5, 0.2], [0.5, 0.5]], seed=0)
        with pytest.raises(ValueError, match="square"):
            generate_markov_corpus(3, [[1.0, 0.0]], seed=0)

    def test_deterministic_chain_alternates(self):
        corpus = generate_markov_corpus(
            20, [[0.0, 1.0], [1.0, 0.0]], seed=3, words=["a", "b"], end_prob=0.1
        )
        for utt in corpus:
            for prev, cur in zip(utt.tokens, utt.tokens[1:]):
                assert {prev, cur} == {"a", "b"}

    def test_same_seed_identical(self):
        t = [[0.3, 0.7], [0.6, 0.4]]
        assert generate_markov_corpus(50, t, seed=9) == generate_markov_corpus(50, t, seed=9)
        assert generate_markov_corpus(50, t, seed=9) != generate_markov_corpus(50, t, seed=10)

    def test_bigram_frequencies_converge(self):
        trans = np.array([[0.1, 0.6, 0.3], [0.5, 0.25, 0.25], [0.2, 0.2, 0.6]])
        corpus = generate_markov_corpus(
            8000, trans, seed=17, end_prob=0.05, max_len=30
        )
        assert corpus.token_count() > 100_000
        words = ["w0", "w1", "w2"]
        counts = np.zeros((3, 3))
        for utt in corpus:
            for prev, cur in zip(utt.tokens, utt.tokens[1:]):
                counts[words.index(prev), words.index(cur)] += 1
        emp = counts / counts.sum(axis=1, keepdims=True)
        assert np.abs(emp - trans).max() < 0.02

    def test_speakers_alternate(self):
        corpus = generate_markov_corpus(4, [[1.0]], seed=0, words=["x"])
        assert [u.speaker for u in corpus] == ["A", "B", "A", "B"]


class TestSoftmaxChoice:
    def test_matches_softmax_probabilities(self):
        rng = np.random.default_rng(5)
        utilities = np.array([0.0, 1.0, -0.5, 2.0, 0.3])
        p = np.exp(utilities)
        p /= p.sum()
        n = 100_000
        counts = np.bincount(
            [softmax_choice(utilities, 1.0, rng) for _ in range(n)], minlength=5
        )
        tv = 0.5 * np.abs(counts / n - p).sum()
        assert tv < 0.01

    def test_zero_temperature_limit_is_argmax(self):
        rng = np.random.default_rng(0)
        utilities = np.array([0.2, 1.7, -0.3])
        for _ in range(50):
            assert softmax_choice(utilities, 1e-9, rng) == 1

    def test_uniform_when_flat(self):
        rng = np.random.default_rng(1)
        counts = np.bincount(
            [softmax_choice(np.zeros(4), 1.0, rng) for _ in range(40_000)], minlength=4
        )
        assert spstats.chisquare(counts).pvalue > 0.01


@pytest.fixture(scope="module")
def sim_corpus():
    rng = np.random.default_rng(88)
    trans = rng.dirichlet(np.ones(6), size=6)
    return generate_markov_corpus(200, trans, seed=88, end_prob=0.2, max_len=12)


class TestSimulateSubstitutions:
    def test_structure_and_determinism(self, sim_corpus):
        provider = SimulatedFeatureProvider([f"c{i}" for i in range(8)])
        policy = SpeakerPolicy(true_beta=BETA_STAR)
        rows1, truth1 = simulate_substitutions(sim_corpus, policy, provider, seed=1, n_frames=50)
        rows2, truth2 = simulate_substitutions(sim_corpus, policy, provider, seed=1, n_frames=50)
        assert rows1 == rows2
        assert truth1 == truth2
        assert len(rows1) == 50 * 8
        by_frame = {}
        for r in rows1:
            by_frame.setdefault(r.frame_id, []).append(r)
        for frame_rows in by_frame.values():
            assert sum(r.produced for r in frame_rows) == 1

    def test_temperature_zero_is_argmax(self, sim_corpus):
        provider = SimulatedFeatureProvider([f"c{i}" for i in range(6)])
        policy = SpeakerPolicy(true_beta=BETA_STAR, temperature=1e-9)
        rows, _ = simulate_substitutions(sim_corpus, policy, provider, seed=2, n_frames=40)
        beta = np.array([BETA_STAR[n] for n in FEATURE_NAMES])
        by_frame = {}
        for r in rows:
            by_frame.setdefault(r.frame_id, []).append(r)
        for frame_rows in by_frame.values():
            utils = np.array(
                [
                    beta
                    @ np.array(
                        [getattr(r, n) for n in FEATURE_NAMES]
                    )
                    for r in frame_rows
                ]
            )
            chosen = [i for i, r in enumerate(frame_rows) if r.produced][0]
            assert chosen == int(np.argmax(utils))

    def test_zero_beta_uniform_choice(self, sim_corpus):
        provider = SimulatedFeatureProvider([f"c{i}" for i in range(5)])
        policy = SpeakerPolicy(true_beta={n: 0.0 for n in FEATURE_NAMES})
        rows, _ = simulate_substitutions(sim_corpus, policy, provider, seed=3, n_frames=4000)
        counts = np.zeros(5)
        for r in rows:
            if r.produced:
                counts[int(r.candidate[1:])] += 1
        assert spstats.chisquare(counts).pvalue > 0.01

    def test_unknown_feature_rejected(self, sim_corpus):
        provider = SimulatedFeatureProvider(["a", "b"])
        with pytest.raises(ValueError, match="unknown feature"):
            SpeakerPolicy(true_beta={"nonexistent": 1.0})
        policy = SpeakerPolicy(true_beta=BETA_STAR)
        provider.feature_names = ("logp_unigram",)  # cripple the provider
        with pytest.raises(ValueError, match="does not supply"):
            simulate_substitutions(sim_corpus, policy, provider, seed=0, n_frames=2)

    def test_temperature_validated(self):
        with pytest.raises(ValueError, match="temperature"):
            SpeakerPolicy(true_beta=BETA_STAR, temperature=0.0)

    def test_fixed_message_becomes_repair(self, sim_corpus):
        provider = SimulatedFeatureProvider(["a", "b", "c"])
        policy = SpeakerPolicy(true_beta=BETA_STAR, message="b")
        _, truth = simulate_substitutions(sim_corpus, policy, provider, seed=4, n_frames=10)
        assert all(f["target"] == "b" for f in truth["frames"])


def _fit_recovered(rows, columns):
    X = np.column_stack([[getattr(r, c) for r in rows] for c in columns])
    y = np.array([float(r.produced) for r in rows])
    Xi, names = add_intercept(X, list(columns))
    fit = fit_logistic(Xi, y, names=names)
    return fit


class TestIdentifiability:
    def test_sign_recovery_at_5000_frames(self, sim_corpus):
        vocab = build_vocab(sim_corpus, 1)
        uni = train_ngram(sim_corpus, 1, 1.0, vocab=vocab)
        fwd = train_ngram(sim_corpus, 2, 1.0, vocab=vocab)
        provider = SimulatedFeatureProvider(vocab.content_words(), unigram=uni, forward=fwd)
        policy = SpeakerPolicy(true_beta=BETA_STAR)
        rows, _ = simulate_substitutions(sim_corpus, policy, provider, seed=42, n_frames=5000)
        fit = _fit_recovered(rows, FEATURE_NAMES)
        for name in FEATURE_NAMES:
            assert math.copysign(1, fit.coefficients[name]) == math.copysign(
                1, BETA_STAR[name]
            ), name

    def test_cond_pmi_effect_monotone_in_generator(self, sim_corpus):
        provider = SimulatedFeatureProvider([f"c{i}" for i in range(10)])
        magnitudes = [0.0, 0.4, 0.8, 1.2, 1.6]
        recovered = []
        for k, mag in enumerate(magnitudes):
            beta = dict(BETA_STAR)
            beta["cond_pmi"] = -mag
            rows, _ = simulate_substitutions(
                sim_corpus, SpeakerPolicy(true_beta=beta), provider,
                seed=100 + k, n_frames=3000,
            )
            fit = _fit_recovered(rows, FEATURE_NAMES)
            recovered.append(-fit.coefficients["cond_pmi"])
        rho = spstats.spearmanr(magnitudes, recovered).statistic
        assert rho > 0.9
