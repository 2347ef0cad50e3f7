"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines and timings.  Criterion 10 concerns the optional neural scoring backend
and is exercised by that package's own test suite; everything here runs on
the in-process n-gram backend alone.
"""

import json
import math
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest
from scipy import stats as spstats

from ctxpred.augment import augment_corpus
from ctxpred.cli import run_pipeline
from ctxpred.corpus import Corpus, Utterance, build_vocab
from ctxpred.measures import pmi_symmetry_check
from ctxpred.ngram import forward_distribution, infill_distribution, train_ngram
from ctxpred.noisy import load_feature_table, phonetic_distance
from ctxpred.stats import (
    FitResult,
    add_intercept,
    bootstrap_ci,
    fit_lmm_random_intercept,
    fit_logistic,
    fit_ols,
    lrt,
)
from ctxpred.synth import (
    FEATURE_NAMES,
    SimulatedFeatureProvider,
    SpeakerPolicy,
    generate_markov_corpus,
    simulate_substitutions,
)

DATA = (Path(__file__).parent.parent / "src" / "ctxpred" / "data").resolve()


@contextmanager
def criterion(num: int, label: str, budget_s: float | None = None):
    start = time.time()
    try:
        yield
        elapsed = time.time() - start
        if budget_s is not None:
            assert elapsed < budget_s, f"took {elapsed:.1f}s (budget {budget_s}s)"
    except BaseException:
        print(f"[FAIL] criterion {num}: {label}")
        raise
    print(f"[PASS] criterion {num}: {label} ({elapsed:.1f}s)")


def _fake_fit(loglik, k, n=100000):
    return FitResult(
        coefficients={f"b{i}": 0.0 for i in range(k)},
        std_errors={f"b{i}": 0.0 for i in range(k)},
        loglik=loglik, n_obs=n, n_params=k, model_kind="lmm_ri", converged=True,
    )


def test_criterion_1_lrt_arithmetic():
    with criterion(1, "LRT arithmetic matches reported chi-square values", budget_s=1.0):
        chi2, df, p = lrt(_fake_fit(-50000.0, 7), _fake_fit(-50000.0 + 2551.95, 8))
        assert df == 1
        assert abs(chi2 - 5103.9) < 0.005
        chi2, df, p = lrt(_fake_fit(-50000.0, 7), _fake_fit(-50000.0 + 41.06, 8))
        assert abs(chi2 - 82.12) < 0.005


def test_criterion_2_reparameterization_equivalence():
    with criterion(2, "{fwd,bwd} vs {fwd,bwd-fwd} designs are equivalent fits"):
        for seed in (0, 1, 2):
            rng = np.random.default_rng(seed)
            n = 400
            uni = rng.normal(size=n)
            fwd = rng.normal(size=n)
            bwd = 0.7 * fwd + 0.5 * rng.normal(size=n)
            X1 = np.column_stack([np.ones(n), uni, fwd, bwd])
            X2 = np.column_stack([np.ones(n), uni, fwd, bwd - fwd])

            y_lin = X1 @ np.array([1.0, 0.4, -0.8, -0.5]) + rng.normal(size=n)
            a, b = fit_ols(X1, y_lin), fit_ols(X2, y_lin)
            assert abs(a.loglik - b.loglik) < 1e-8
            assert np.abs(a.fitted - b.fitted).max() < 1e-8

            eta = X1 @ np.array([0.2, 0.3, 0.6, -0.5])
            y_bin = (rng.random(n) < 1 / (1 + np.exp(-eta))).astype(float)
            a, b = fit_logistic(X1, y_bin), fit_logistic(X2, y_bin)
            assert abs(a.loglik - b.loglik) < 1e-8
            assert np.abs(a.fitted - b.fitted).max() < 1e-8


def test_criterion_3_conditional_pmi_symmetry():
    with criterion(3, "conditional-PMI identity on 100 random corpora", budget_s=30.0):
        rng = np.random.default_rng(314)
        worst = 0.0
        for _ in range(100):
            size = int(rng.integers(3, 7))
            trans = rng.dirichlet(np.ones(size), size=size)
            corpus = generate_markov_corpus(
                12, trans, seed=int(rng.integers(1 << 30)), end_prob=0.25, max_len=7
            )
            order = int(rng.integers(2, 4))
            model = train_ngram(corpus, order, float(rng.uniform(0.1, 2.0)))
            for utt in list(corpus)[:6]:
                for t in range(len(utt.tokens)):
                    lhs, rhs = pmi_symmetry_check(model, utt, t)
                    worst = max(worst, abs(lhs - rhs))
        assert worst < 1e-9, f"max discrepancy {worst:.3e}"


def test_criterion_4_normalization_sweep():
    with criterion(4, "conditional and infill distributions sum to 1 within 1e-9"):
        rng = np.random.default_rng(2718)
        for _ in range(20):
            size = int(rng.integers(3, 7))
            trans = rng.dirichlet(np.ones(size), size=size)
            corpus = generate_markov_corpus(
                10, trans, seed=int(rng.integers(1 << 30)), end_prob=0.3, max_len=6
            )
            order = int(rng.integers(1, 4))
            model = train_ngram(corpus, order, float(rng.uniform(0.05, 3.0)))
            words = model.event_words()
            for _ in range(5):
                k = int(rng.integers(0, 3))
                ctx = [words[int(rng.integers(0, len(words)))] for _ in range(k)]
                total = sum(math.exp(v) for v in forward_distribution(model, ctx).values())
                assert abs(total - 1.0) < 1e-9
            suf = [words[int(rng.integers(0, len(words)))] for _ in range(2)]
            dist = infill_distribution(model, ctx, suf)
            assert abs(sum(map(math.exp, dist.values())) - 1.0) < 1e-9


def test_criterion_5_augmentation_statistics():
    with criterion(5, "swap rate in exact binomial 99% interval; positions uniform"):
        n, length = 10_000, 8
        corpus = Corpus(
            tuple(
                Utterance("c", "A", [f"w{j}" for j in range(length)])
                for _ in range(n)
            )
        )
        records = augment_corpus(corpus, seed=1234, swap_prob=0.5)
        assert len(records) == n
        swaps = sum(r.swapped for r in records)
        lo = spstats.binom.ppf(0.005, n, 0.5)
        hi = spstats.binom.ppf(0.995, n, 0.5)
        assert lo <= swaps <= hi, f"swap count {swaps} outside [{lo}, {hi}]"
        counts = np.bincount([r.k - 1 for r in records], minlength=length)
        pval = spstats.chisquare(counts).pvalue
        assert pval > 0.01, f"position uniformity p={pval:.4f}"


def test_criterion_6_study2_parameter_recovery():
    true_beta = {
        "logp_unigram": 0.3,
        "logp_forward": 0.15,
        "sem_dist": -0.6,
        "phon_dist": -0.25,
        "cond_pmi": -0.3,
    }
    with criterion(
        6,
        "logistic recovery: all signs, each beta* in 95% bootstrap CI >= 18/20",
        budget_s=600.0,
    ):
        rng = np.random.default_rng(2)
        states = 32
        pop = 1.0 / np.arange(1, states + 1) ** 0.4
        trans = [r / r.sum() for r in (pop * np.exp(rng.normal(0, 0.4, (states, states))))]
        corpus = generate_markov_corpus(400, trans, seed=2, end_prob=0.15, max_len=16)
        vocab = build_vocab(corpus, 1)
        uni = train_ngram(corpus, 1, 1.0, vocab=vocab)
        fwd = train_ngram(corpus, 2, 1.0, vocab=vocab)
        provider = SimulatedFeatureProvider(vocab.content_words(), unigram=uni, forward=fwd)
        policy = SpeakerPolicy(true_beta=true_beta)

        in_ci = {n: 0 for n in FEATURE_NAMES}
        sign_failures = []
        for seed in range(20):
            rows, _ = simulate_substitutions(corpus, policy, provider, seed=seed, n_frames=5000)
            X = np.column_stack([[getattr(r, c) for r in rows] for c in FEATURE_NAMES])
            y = np.array([float(r.produced) for r in rows])
            Xi, names = add_intercept(X, list(FEATURE_NAMES))
            fit = fit_logistic(Xi, y, names=names)
            for n in FEATURE_NAMES:
                if math.copysign(1, fit.coefficients[n]) != math.copysign(1, true_beta[n]):
                    sign_failures.append((seed, n))
            boot = bootstrap_ci(
                lambda a, b: fit_logistic(a, b, names=names, init=fit.beta()),
                (Xi, y),
                n_sims=200,
                seed=1000 + seed,
            )
            for n in FEATURE_NAMES:
                in_ci[n] += boot.covers(n, true_beta[n])
        assert not sign_failures, f"sign errors: {sign_failures}"
        assert all(v >= 18 for v in in_ci.values()), f"in-CI counts {in_ci}"
        print(f"       per-coefficient in-CI counts over 20 runs: {in_ci}")


def test_criterion_7_lmm_sanity():
    with criterion(7, "LMM: zero-variance equals OLS; known components within 20%"):
        rng = np.random.default_rng(5)
        n_groups, per_group = 20, 15
        n = n_groups * per_group
        X = np.hstack([np.ones((n, 1)), rng.normal(size=(n, 1))])
        groups = np.repeat(np.arange(n_groups), per_group)
        u = rng.normal(0, 0.0, size=n_groups)  # true group variance is zero
        y = X @ np.array([2.0, -1.0]) + u[groups] + rng.normal(0, 1.0, size=n)
        lmm = fit_lmm_random_intercept(X, y, groups)
        assert lmm.group_variance == pytest.approx(0.0, abs=1e-4)
        ols = fit_ols(X, y)
        for name in lmm.coefficients:
            assert abs(lmm.coefficients[name] - ols.coefficients[name]) < 1e-6

        rng = np.random.default_rng(7)
        n_groups, per_group = 50, 40
        n = n_groups * per_group
        X = np.hstack([np.ones((n, 1)), rng.normal(size=(n, 1))])
        groups = np.repeat(np.arange(n_groups), per_group)
        u = rng.normal(0, 10.0, size=n_groups)
        y = X @ np.array([2.0, -1.0]) + u[groups] + rng.normal(0, 5.0, size=n)
        fit = fit_lmm_random_intercept(X, y, groups)
        assert fit.converged
        assert abs(fit.group_variance - 100.0) / 100.0 < 0.20
        assert abs(fit.residual_variance - 25.0) / 25.0 < 0.20


def test_criterion_8_phonetic_distance_units():
    with criterion(8, "phonetic distance: identity 0, one cell 1/22, indel 1.0"):
        table = load_feature_table(DATA / "phonetic_features.tsv")
        m = [list(table["d"]), list(table["ɔ"]), list(table["g"])]
        assert phonetic_distance(m, m) == 0.0
        a = [list(table["t"])]
        b = [list(table["t"])]
        b[0][8] = "+"
        assert phonetic_distance(a, b) == pytest.approx(1 / 22, abs=1e-15)
        one = [list(table["a"])]
        two = [list(table["a"]), list(table["b"])]
        assert phonetic_distance(one, two) == pytest.approx(1.0, abs=1e-15)


def test_criterion_9_end_to_end_determinism(tmp_path):
    with criterion(9, "full toy pipeline twice: byte-identical CSV outputs"):
        stages = [
            "train-ngram", "augment", "score", "measures",
            "extract-frames", "features", "fit", "compare",
        ]
        outputs = []
        for run in (1, 2):
            out = tmp_path / f"run{run}"
            cfg = {
                "seed": 7,
                "out_dir": str(out),
                "corpus": str(DATA / "toy_corpus.jsonl"),
                "stages": stages,
                "ngram": {"order": 2, "alpha": 1.0},
                "augment": {"swap_prob": 0.5},
                "features": {
                    "embeddings": str(DATA / "toy_embeddings.vec"),
                    "lexicon": str(DATA / "toy_lexicon.tsv"),
                    "feature_table": str(DATA / "phonetic_features.tsv"),
                    "noise_var": 0.1,
                    "policy": "strict",
                },
                "fit": {
                    "models": {
                        "baseline": ["logp_unigram", "logp_forward", "sem_dist", "phon_dist"],
                        "condpmi": [
                            "logp_unigram", "logp_forward", "sem_dist", "phon_dist", "cond_pmi"
                        ],
                    }
                },
                "compare": {"pairs": [["baseline", "condpmi"]]},
            }
            cfg_path = tmp_path / f"config{run}.json"
            cfg_path.write_text(json.dumps(cfg))
            assert run_pipeline(cfg_path) == 0
            outputs.append(out)
        first, second = outputs
        compared = 0
        for path in sorted(first.rglob("*")):
            if path.suffix not in (".csv", ".txt", ".jsonl"):
                continue
            rel = path.relative_to(first)
            assert (second / rel).read_bytes() == path.read_bytes(), rel
            compared += 1
        assert compared >= 5


def test_criterion_10_secondary_backend_note():
    pytest.skip(
        "criterion 10 is [SECONDARY]: the neural scoring backend in "
        "neural-backend/ validates infill-vs-forward consistency (r > 0.7) in "
        "its own test suite; the primary suite runs fully on the n-gram backend"
    )
