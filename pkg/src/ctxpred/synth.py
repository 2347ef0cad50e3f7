"""Synthetic corpora and substitution events from a known speaker policy.

The simulator is a statistical oracle: utterances come from a seeded Markov
chain, and at sampled slots a "speaker" chooses the produced word by a
softmax over a linear utility of the regression features (with the latent
target realized as the repair).  Because the generating coefficients are
known, the whole estimation pipeline can be validated by parameter recovery.

The intractable expectation over possible futures is collapsed onto the
single realized future chunk, so candidate words are scored against the
fixed observed context.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import Corpus, Utterance, Vocabulary
from .ngram import NGramModel, cond_logprob
from .substitution import FeatureRow

FEATURE_NAMES = ("logp_unigram", "logp_forward", "sem_dist", "phon_dist", "cond_pmi")


@dataclass(frozen=True)
class SpeakerPolicy:
    """Choice policy: utility = true_beta . features, softmax at ``temperature``.

    ``message`` optionally fixes the latent target word for every frame;
    by default a fresh target is drawn per frame and becomes its repair.
    """

    true_beta: dict[str, float]
    temperature: float = 1.0
    message: str | None = None

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")
        unknown = set(self.true_beta) - set(FEATURE_NAMES)
        if unknown:
            raise ValueError(f"unknown feature name(s) {sorted(unknown)}; "
                             f"coefficients must match {FEATURE_NAMES}")


def generate_markov_corpus(
    n_utts: int,
    transition: Sequence[Sequence[float]],
    seed: int,
    words: Sequence[str] | None = None,
    end_prob: float = 0.15,
    max_len: int = 60,
    conversation_id: str = "sim",
) -> Corpus:
    """Sample utterances from a first-order Markov chain with geometric length.

    The initial state is uniform; after each token the utterance ends with
    probability ``end_prob`` (always at ``max_len``).
    """
    trans = np.asarray(transition, dtype=float)
    if trans.ndim != 2 or trans.shape[0] != trans.shape[1]:
        raise ValueError("transition must be a square matrix")
    if (trans < 0).any() or not np.allclose(trans.sum(axis=1), 1.0, atol=1e-9):
        raise ValueError("transition rows must be non-negative and sum to 1")
    s = trans.shape[0]
    if words is None:
        words = [f"w{i}" for i in range(s)]
    if len(words) != s:
        raise ValueError("words must match the transition dimension")
    rng = np.random.default_rng(seed)
    utterances = []
    for i in range(n_utts):
        state = int(rng.integers(0, s))
        tokens = [words[state]]
        while len(tokens) < max_len and rng.random() >= end_prob:
            state = int(rng.choice(s, p=trans[state]))
            tokens.append(words[state])
        utterances.append(
            Utterance(
                conversation_id=conversation_id,
                speaker="A" if i % 2 == 0 else "B",
                tokens=tokens,
            )
        )
    return Corpus(utterances=tuple(utterances))


def softmax_choice(utilities: np.ndarray, temperature: float, rng: np.random.Generator) -> int:
    """Draw an index from softmax(utilities / temperature), stably."""
    z = (utilities - utilities.max()) / temperature
    p = np.exp(z)
    p /= p.sum()
    return int(rng.choice(len(p), p=p))


class SimulatedFeatureProvider:
    """Feature provider for simulation frames.

    Unigram and forward predictability are real model scores at the sampled
    slot when models are supplied (falling back to Gaussian draws otherwise);
    the distance features and conditional PMI are synthetic, with the latent
    target drawn per frame and given small distances.
    """

    feature_names = FEATURE_NAMES

    def __init__(
        self,
        candidates: Sequence[str],
        unigram: NGramModel | None = None,
        forward: NGramModel | None = None,
    ):
        if not candidates:
            raise ValueError("candidates must be non-empty")
        self.candidates = list(candidates)
        self.unigram = unigram
        self.forward = forward

    def frame_features(
        self, corpus: Corpus, slot: tuple[int, int], rng: np.random.Generator
    ) -> tuple[dict[str, np.ndarray], int]:
        n = len(self.candidates)
        target = int(rng.integers(0, n))
        utt_index, t = slot
        pre = list(corpus[utt_index].tokens[:t])
        if self.unigram is not None:
            uni = np.array([cond_logprob(self.unigram, w, []) for w in self.candidates])
        else:
            uni = rng.normal(-5.0, 1.0, size=n)
        if self.forward is not None:
            fwd = np.array([cond_logprob(self.forward, w, pre) for w in self.candidates])
        else:
            fwd = rng.normal(-4.0, 1.2, size=n)
        # The latent target is closer to the noisy representations on average,
        # but only mildly: a dominant target concentrates the softmax on a few
        # rows and biases the stacked binary-logistic approximation.
        sem = np.clip(rng.normal(1.05, 0.35, size=n), 0.0, 2.0)
        sem[target] = max(0.0, rng.normal(0.7, 0.2))
        phon = np.abs(rng.normal(1.6, 0.8, size=n))
        phon[target] = abs(rng.normal(1.2, 0.6))
        pmi = rng.normal(0.0, 0.8, size=n)
        return {
            "logp_unigram": uni,
            "logp_forward": fwd,
            "sem_dist": sem,
            "phon_dist": phon,
            "cond_pmi": pmi,
            "uncond_pmi": pmi + rng.normal(0.0, 0.4, size=n),
            "rel_backward": pmi + rng.normal(0.0, 0.4, size=n),
        }, target


def simulate_substitutions(
    corpus: Corpus,
    policy: SpeakerPolicy,
    features: SimulatedFeatureProvider,
    seed: int,
    n_frames: int | None = None,
) -> tuple[list[FeatureRow], dict]:
    """Simulate substitution choices and return labeled rows plus ground truth.

    Slots (utterance, position) are sampled uniformly; at each slot the
    produced word is drawn from softmax(true_beta . features / temperature).
    The per-frame latent target is realized as the repair.
    """
    missing = [n for n in policy.true_beta if n not in features.feature_names]
    if missing:
        raise ValueError(f"feature provider does not supply {missing}")
    slots = [(i, t) for i, utt in enumerate(corpus) for t in range(len(utt.tokens))]
    if not slots:
        raise ValueError("corpus has no token positions to sample")
    if n_frames is None:
        n_frames = len(corpus)
    beta_vec = np.array([policy.true_beta.get(n, 0.0) for n in features.feature_names])
    slot_rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0xFFFF,)))
    slot_idx = slot_rng.integers(0, len(slots), size=n_frames)
    rows: list[FeatureRow] = []
    frame_meta = []
    for f in range(n_frames):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(f,)))
        slot = slots[int(slot_idx[f])]
        feats, target = features.frame_features(corpus, slot, rng)
        mat = np.column_stack([feats[name] for name in features.feature_names])
        utilities = mat @ beta_vec
        choice = softmax_choice(utilities, policy.temperature, rng)
        if policy.message is not None and policy.message in features.candidates:
            target = features.candidates.index(policy.message)
        frame_id = f"sim:{f}"
        for i, cand in enumerate(features.candidates):
            rows.append(
                FeatureRow(
                    frame_id=frame_id,
                    candidate=cand,
                    produced=int(i == choice),
                    logp_unigram=float(feats["logp_unigram"][i]),
                    logp_forward=float(feats["logp_forward"][i]),
                    sem_dist=float(feats["sem_dist"][i]),
                    phon_dist=float(feats["phon_dist"][i]),
                    uncond_pmi=float(feats["uncond_pmi"][i]),
                    cond_pmi=float(feats["cond_pmi"][i]),
                    rel_backward=float(feats["rel_backward"][i]),
                    lexical_class=None,
                )
            )
        frame_meta.append(
            {
                "frame_id": frame_id,
                "slot": list(slot),
                "target": features.candidates[target],
                "produced": features.candidates[choice],
            }
        )
    truth = {
        "true_beta": dict(policy.true_beta),
        "temperature": policy.temperature,
        "seed": seed,
        "n_frames": n_frames,
        "feature_names": list(features.feature_names),
        "frames": frame_meta,
    }
    return rows, truth
