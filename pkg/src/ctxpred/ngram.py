"""Count-based n-gram language models with Laplace smoothing.

The models here are exact and enumerable, which makes them both the default
scoring backend and the brute-force oracle for every probability quantity in
the toolkit: forward and backward conditionals, infill (bidirectional)
probabilities by enumerate-and-normalize, and perplexity.

Conventions:
  * natural log everywhere;
  * utterances are padded on the left with order-1 boundary sentinels that are
    never predicted, and terminated with a predicted <eos>;
  * the backward direction trains on per-utterance reversed token sequences
    (the "reversed corpus" recipe), then applies the same padding;
  * the smoothed event space is the vocabulary minus the infill markers
    (<PRE>, <SUF>, <MID>); <unk> can be excluded via ``include_unk=False``.
"""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import MID, PRE, SUF, Corpus, Vocabulary, build_vocab, lm_sequences

PAD_ID = -1  # boundary sentinel; deliberately not a vocabulary id

DIRECTIONS = ("forward", "backward")

_NON_EVENT = (PRE, SUF, MID)


@dataclass
class NGramModel:
    order: int
    alpha: float
    direction: str
    vocab: Vocabulary
    counts: dict[tuple[int, ...], dict[int, int]]
    totals: dict[tuple[int, ...], int]
    include_unk: bool = True
    _event_ids: tuple[int, ...] = field(default=(), repr=False)

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}")
        skip = set(_NON_EVENT)
        if not self.include_unk:
            skip.add("<unk>")
        self._event_ids = tuple(
            i for i, w in enumerate(self.vocab.id_to_word) if w not in skip
        )

    @property
    def event_ids(self) -> tuple[int, ...]:
        """Word ids the model assigns smoothed probability to."""
        return self._event_ids

    @property
    def n_events(self) -> int:
        return len(self._event_ids)

    def event_words(self) -> list[str]:
        return [self.vocab.word(i) for i in self._event_ids]


def _to_id(vocab: Vocabulary, token: str | int) -> int:
    if isinstance(token, int):
        return token
    return vocab.id(token)


def _context_key(model: NGramModel, context: Sequence[str | int]) -> tuple[int, ...]:
    """Last order-1 context ids, left-padded with the boundary sentinel."""
    k = model.order - 1
    if k == 0:
        return ()
    ids = [_to_id(model.vocab, t) for t in context[-k:]]
    if len(ids) < k:
        ids = [PAD_ID] * (k - len(ids)) + ids
    return tuple(ids)


def train_ngram(
    corpus: Corpus | Iterable[Sequence[str]],
    order: int,
    alpha: float,
    direction: str = "forward",
    vocab: Vocabulary | None = None,
    include_unk: bool = True,
    include_speaker_tags: bool = False,
) -> NGramModel:
    """Collect n-gram counts over boundary-padded, <eos>-terminated utterances."""
    if isinstance(corpus, Corpus):
        if len(corpus) == 0:
            raise ValueError("cannot train on an empty corpus")
        if vocab is None:
            vocab = build_vocab(corpus, min_count=1, include_speaker_tags=include_speaker_tags)
        sequences: Iterable[Sequence[str]] = lm_sequences(corpus, include_speaker_tags)
    else:
        sequences = list(corpus)
        if not sequences:
            raise ValueError("cannot train on an empty corpus")
        if vocab is None:
            raise ValueError("a vocabulary is required when training on raw sequences")
    counts: dict[tuple[int, ...], dict[int, int]] = defaultdict(lambda: defaultdict(int))
    totals: dict[tuple[int, ...], int] = defaultdict(int)
    eos_id = vocab.eos_id
    k = order - 1
    for seq in sequences:
        ids = [vocab.id(t) for t in seq]
        if direction == "backward":
            ids.reverse()
        events = ids + [eos_id]
        padded = [PAD_ID] * k + events
        for i in range(k, len(padded)):
            ctx = tuple(padded[i - k : i])
            counts[ctx][padded[i]] += 1
            totals[ctx] += 1
    return NGramModel(
        order=order,
        alpha=alpha,
        direction=direction,
        vocab=vocab,
        counts={c: dict(w) for c, w in counts.items()},
        totals=dict(totals),
        include_unk=include_unk,
    )


def cond_logprob(
    model: NGramModel, word: str | int, context: Sequence[str | int] = ()
) -> float:
    """log p(word | context) with Laplace smoothing: (c + a) / (total + a*V).

    Unseen contexts and words are well-defined through smoothing; context
    words outside the vocabulary fall back to <unk>.
    """
    wid = _to_id(model.vocab, word)
    ctx = _context_key(model, context)
    c = model.counts.get(ctx, {}).get(wid, 0)
    total = model.totals.get(ctx, 0)
    v = model.n_events
    if model.vocab.word(wid) in _NON_EVENT or (
        not model.include_unk and wid == model.vocab.unk_id
    ):
        raise ValueError(f"{model.vocab.word(wid)!r} is not in the model's event space")
    return math.log((c + model.alpha) / (total + model.alpha * v))


def forward_distribution(
    model: NGramModel, context: Sequence[str | int] = ()
) -> dict[str, float]:
    """Full smoothed conditional distribution over the event space (log-space)."""
    ctx = _context_key(model, context)
    seen = model.counts.get(ctx, {})
    total = model.totals.get(ctx, 0)
    v = model.n_events
    denom = math.log(total + model.alpha * v)
    return {
        model.vocab.word(wid): math.log(seen.get(wid, 0) + model.alpha) - denom
        for wid in model._event_ids
    }


def chain_logprob(model: NGramModel, tokens: Sequence[str | int]) -> float:
    """Sum of conditional log-probabilities of ``tokens`` under left padding.

    No implicit <eos>: the caller decides whether the chain is a complete
    utterance.
    """
    ids = [_to_id(model.vocab, t) for t in tokens]
    k = model.order - 1
    padded = [PAD_ID] * k + ids
    total = 0.0
    for i in range(k, len(padded)):
        total += cond_logprob(model, padded[i], padded[max(0, i - k) : i])
    return total


def _infill_scores(
    model: NGramModel, pre: Sequence[str | int], suf: Sequence[str | int]
) -> tuple[list[int], np.ndarray]:
    """Unnormalized log chain scores of pre + [w] + suf for every event word w."""
    pre_ids = [_to_id(model.vocab, t) for t in pre]
    suf_ids = [_to_id(model.vocab, t) for t in suf]
    scores = np.empty(model.n_events)
    for j, wid in enumerate(model._event_ids):
        s = cond_logprob(model, wid, pre_ids)
        ctx = pre_ids + [wid]
        for tok in suf_ids:
            s += cond_logprob(model, tok, ctx)
            ctx.append(tok)
        scores[j] = s
    return list(model._event_ids), scores


def infill_distribution(
    model: NGramModel, pre: Sequence[str | int], suf: Sequence[str | int]
) -> dict[str, float]:
    """p(w | pre, suf) over the whole event space by enumerate-and-normalize.

    The chain probability of pre itself is a common factor and cancels, so
    scores start at the infill position.
    """
    if model.direction != "forward":
        raise ValueError("infill scoring requires a forward model")
    ids, scores = _infill_scores(model, pre, suf)
    logz = float(np.logaddexp.reduce(scores))
    return {model.vocab.word(wid): float(s - logz) for wid, s in zip(ids, scores)}

def infill_logprob(
    model: NGramModel,
    word: str | int,
    pre: Sequence[str | int],
    suf: Sequence[str | int],
) -> float:
    """log p(word | pre, suf); with an empty suffix this equals cond_logprob exactly."""
    if model.direction != "forward":
        raise ValueError("infill scoring requires a forward model")
    if not suf:
        return cond_logprob(model, word, pre)
    wid = _to_id(model.vocab, word)
    ids, scores = _infill_scores(model, pre, suf)
    logz = float(np.logaddexp.reduce(scores))
    try:
        j = ids.index(wid)
    except ValueError:
        raise ValueError(f"{word!r} is not in the model's event space") from None
    return float(scores[j] - logz)


def perplexity(model: NGramModel, corpus: Corpus, include_speaker_tags: bool = False) -> float:
    """exp(mean per-token negative log-probability), <eos> included."""
    if len(corpus) == 0:
        raise ValueError("cannot compute perplexity of an empty corpus")
    total = 0.0
    n = 0
    for seq in lm_sequences(corpus, include_speaker_tags):
        ids = [model.vocab.id(t) for t in seq]
        if model.direction == "backward":
            ids.reverse()
        events = ids + [model.vocab.eos_id]
        k = model.order - 1
        padded = [PAD_ID] * k + events
        for i in range(k, len(padded)):
            total += cond_logprob(model, padded[i], padded[max(0, i - k) : i])
            n += 1
    return math.exp(-total / n)


def save_model(model: NGramModel, path: str | Path) -> None:
    """Versioned JSON dump; context order is sorted so output is stable."""
    items = sorted(model.counts.items())
    payload = {
        "format": "ctxpred-ngram",
        "version": 1,
        "order": model.order,
        "alpha": model.alpha,
        "direction": model.direction,
        "include_unk": model.include_unk,
        "vocab": {
            "min_count": model.vocab.min_count,
            "speaker_tags": list(model.vocab.speaker_tags),
            "words": list(model.vocab.id_to_word),
        },
        "counts": [
            [list(ctx), sorted(words.items())] for ctx, words in items
        ],
    }
    Path(path).write_text(
        json.dumps(payload, ensure_ascii=False, separators=(",", ":")) + "\n",
        encoding="utf-8",
    )


def load_model(path: str | Path) -> NGramModel:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format") != "ctxpred-ngram" or payload.get("version") != 1:
        raise ValueError(f"{path}: not a version-1 ngram model file")
    vocab = Vocabulary(
        id_to_word=tuple(payload["vocab"]["words"]),
        min_count=int(payload["vocab"]["min_count"]),
        speaker_tags=tuple(payload["vocab"].get("speaker_tags", ())),
    )
    counts: dict[tuple[int, ...], dict[int, int]] = {}
    totals: dict[tuple[int, ...], int] = {}
    for ctx_list, word_items in payload["counts"]:
        ctx = tuple(ctx_list)
        words = {int(w): int(c) for w, c in word_items}
        counts[ctx] = words
        totals[ctx] = sum(words.values())
    return NGramModel(
        order=int(payload["order"]),
        alpha=float(payload["alpha"]),
        direction=payload["direction"],
        vocab=vocab,
        counts=counts,
        totals=totals,
        include_unk=bool(payload["include_unk"]),
    )
