"""Contextual predictability measures and correlation diagnostics.

Given per-token log-probabilities (unigram, forward, backward, bidirectional),
derives the three composite measures:

  unconditional PMI       = log p(w|future) - log p(w)
  conditional PMI         = log p(w|past, future) - log p(w|past)
  relative backward pred. = log p(w|future) - log p(w|past)

All values are in nats.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import Utterance
from .ngram import NGramModel, cond_logprob, infill_logprob

SCORES_COLUMNS = (
    "conversation_id",
    "utt_index",
    "t",
    "word",
    "logp_unigram",
    "logp_forward",
    "logp_backward",
    "logp_bidirectional",
    "uncond_pmi",
    "cond_pmi",
    "rel_backward",
)


@dataclass(frozen=True)
class MeasureSet:
    forward: float
    backward: float
    unigram: float
    uncond_pmi: float
    cond_pmi: float
    rel_backward: float


def compute_measures(rec) -> MeasureSet:
    """Derive the composite measures from a PredictabilityRecord.

    Raises ValueError identifying the record if any log-probability is not
    finite.
    """
    values = (rec.logp_unigram, rec.logp_forward, rec.logp_backward, rec.logp_bidirectional)
    if not all(math.isfinite(v) for v in values):
        raise ValueError(
            f"non-finite log-probability in record "
            f"({rec.conversation_id!r}, utt {rec.utt_index}, t={rec.t}, word={rec.word!r})"
        )
    return MeasureSet(
        forward=rec.logp_forward,
        backward=rec.logp_backward,
        unigram=rec.logp_unigram,
        uncond_pmi=rec.logp_backward - rec.logp_unigram,
        cond_pmi=rec.logp_bidirectional - rec.logp_forward,
        rel_backward=rec.logp_backward - rec.logp_forward,
    )


def pmi_symmetry_check(
    model: NGramModel, utterance: Utterance, t: int
) -> tuple[float, float]:
    """Evaluate both sides of the conditional-PMI identity at position t.

    lhs: log p(w_t|C_<t, C_>t) - log p(w_t|C_<t), via infill enumeration.
    rhs: log p(C_>t|w_t, C_<t) - log p(C_>t|C_<t), with the second term
    obtained by marginalizing over the event space.

    Under exact enumeration the two agree to floating-point accuracy; an empty
    future makes both sides zero.
    """
    tokens = list(utterance.tokens)
    if not (0 <= t < len(tokens)):
        raise ValueError(f"position {t} out of range for {len(tokens)} tokens")
    pre = tokens[:t]
    word = tokens[t]
    suf = tokens[t + 1 :]
    lhs = infill_logprob(model, word, pre, suf) - cond_logprob(model, word, pre)
    if not suf:
        return lhs, 0.0
    pre_ids = [model.vocab.id(w) for w in pre]
    suf_ids = [model.vocab.id(w) for w in suf]

    def _suffix_chain(first: int) -> float:
        ctx = pre_ids + [first]
        s = 0.0
        for tok in suf_ids:
            s += cond_logprob(model, tok, ctx)
            ctx.append(tok)
        return s

    log_p_suf_given_word = _suffix_chain(model.vocab.id(word))
    alternatives = np.array(
        [cond_logprob(model, wid, pre_ids) + _suffix_chain(wid) for wid in model.event_ids]
    )
    log_p_suf_given_past = float(np.logaddexp.reduce(alternatives))
    return lhs, log_p_suf_given_word - log_p_suf_given_past


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Sample Pearson correlation; constant series are undefined."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape:
        raise ValueError("series must have equal length")
    if x.size < 2:
        raise ValueError("need at least two observations")
    xc = x - x.mean()
    yc = y - y.mean()
    sx = math.sqrt(float(xc @ xc))
    sy = math.sqrt(float(yc @ yc))
    if sx == 0.0 or sy == 0.0:
        raise ValueError("undefined correlation: constant series")
    r = float(xc @ yc) / (sx * sy)
    return max(-1.0, min(1.0, r))


def scores_table(records) -> list[dict]:
    """One row per scored token: raw log-probs plus the derived measures."""
    rows = []
    for rec in records:
        m = compute_measures(rec)
        rows.append(
            {
                "conversation_id": rec.conversation_id,
                "utt_index": rec.utt_index,
                "t": rec.t,
                "word": rec.word,
                "logp_unigram": rec.logp_unigram,
                "logp_forward": rec.logp_forward,
                "logp_backward": rec.logp_backward,
                "logp_bidirectional": rec.logp_bidirectional,
                "uncond_pmi": m.uncond_pmi,
                "cond_pmi": m.cond_pmi,
                "rel_backward": m.rel_backward,
            }
        )
    return rows


def format_float(v: float) -> str:
    return format(v, ".12g")


def write_scores_csv(records, path: str | Path) -> None:
    rows = scores_table(records)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SCORES_COLUMNS)
        for row in rows:
            writer.writerow(
                [
                    row["conversation_id"],
                    row["utt_index"],
                    row["t"],
                    row["word"],
                    *(format_float(row[c]) for c in SCORES_COLUMNS[4:]),
                ]
            )
