"""Infill training-data augmentation and inference-query construction.

Each utterance is rewritten so that a uniformly sampled word is moved to the
end, with the surrounding contexts demarcated by <PRE>/<SUF> and the moved
word introduced by <MID>.  In a configurable fraction of utterances (a fair
coin by default) the suffix block is emitted before the prefix block.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import EOS, MID, PRE, SUF, Corpus

__all__ = ["AugmentedRecord", "augment_corpus", "make_infill_query", "write_augmented"]


@dataclass(frozen=True)
class AugmentedRecord:
    utt_index: int
    conversation_id: str
    k: int  # 1-based sampled position
    swapped: bool
    sequence: tuple[str, ...]

    def text(self) -> str:
        return " ".join(self.sequence)


def make_infill_query(
    pre: Sequence[str], suf: Sequence[str], swapped: bool = False
) -> list[str]:
    """Inference-time query: context blocks followed by <MID>; candidates are
    scored at the position after <MID>."""
    if swapped:
        return [SUF, *suf, PRE, *pre, MID]
    return [PRE, *pre, SUF, *suf, MID]


def _augment_one(
    tokens: Sequence[str], k: int, swapped: bool, speaker_tag: str | None
) -> tuple[str, ...]:
    pre = list(tokens[: k - 1])
    suf = list(tokens[k:])
    if speaker_tag is not None:
        pre = [speaker_tag, *pre]  # tag lives at the head of the prefix block
    return tuple(make_infill_query(pre, suf, swapped) + [tokens[k - 1], EOS])


def augment_corpus(
    corpus: Corpus,
    seed: int,
    swap_prob: float = 0.5,
    include_speaker_tags: bool = False,
    n_samples: int = 1,
) -> list[AugmentedRecord]:
    """One augmented record per non-empty utterance, deterministic given seed.

    Randomness is drawn from a per-utterance stream spawned off the seed, so
    records are independent of iteration order and safe to generate in
    parallel.  ``n_samples`` > 1 draws several independent records per
    utterance (multi-sample extension; trainers that re-augment per epoch can
    instead call this once per epoch with a derived seed).
    """
    if not (0.0 <= swap_prob <= 1.0):
        raise ValueError("swap_prob must lie in [0, 1]")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    records: list[AugmentedRecord] = []
    for i, utt in enumerate(corpus):
        n = len(utt.tokens)
        if n == 0:
            continue
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,)))
        tag = utt.speaker if include_speaker_tags else None
        for _ in range(n_samples):
            k = int(rng.integers(1, n + 1))
            swapped = bool(rng.random() < swap_prob)
            records.append(
                AugmentedRecord(
                    utt_index=i,
                    conversation_id=utt.conversation_id,
                    k=k,
                    swapped=swapped,
                    sequence=_augment_one(utt.tokens, k, swapped, tag),
                )
            )
    return records


def write_augmented(records: Sequence[AugmentedRecord], path: str | Path) -> None:
    """Plain text, one space-separated augmented sequence per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(rec.text() + "\n")
