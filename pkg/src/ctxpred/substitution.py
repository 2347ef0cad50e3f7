"""Substitution-error frame extraction and per-candidate regression rows.

A frame is a fluent utterance template with one slot: the word the speaker
actually produced there (the error), the self-repair treated as the intended
target, and the surrounding contexts with all disfluent material removed.
Qualifying pairs are single-word reparandum/repair pairs whose POS tags match
and that are adjacent up to intervening repetitions or filled pauses.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .corpus import EOS, Corpus, Utterance, Vocabulary
from .gateway import score_backward, score_forward, score_infill
from .measures import format_float
from .ngram import NGramModel, cond_logprob
from .noisy import (
    EmbeddingTable,
    PhoneticFeatureTable,
    PronLexicon,
    derive_seed,
    noisy_phonetic_target,
    noisy_semantic_target,
    phonetic_distance,
    semantic_distance,
    word_features,
)

ROWS_COLUMNS = (
    "frame_id",
    "candidate",
    "produced",
    "logp_unigram",
    "logp_forward",
    "sem_dist",
    "phon_dist",
    "uncond_pmi",
    "cond_pmi",
    "rel_backward",
    "lexical_class",
)

# PTB tags treated as open-class; everything else counts as function.
_CONTENT_PREFIXES = ("NN", "VB", "JJ", "RB", "CD", "FW")

_REMOVED_KINDS = {"reparandum", "filler", "repetition"}


def pos_to_lexical_class(tag: str) -> str:
    return "content" if tag.startswith(_CONTENT_PREFIXES) else "function"


@dataclass(frozen=True)
class SubstitutionFrame:
    frame_id: str
    conversation_id: str
    utt_index: int
    pre_context: tuple[str, ...]
    post_context: tuple[str, ...]
    error: str
    repair: str
    pos: str
    category: str | None = None

    @property
    def t(self) -> int:
        return len(self.pre_context)

    def fluent_tokens(self) -> list[str]:
        """The repaired utterance the frame reconstructs."""
        return [*self.pre_context, self.repair, *self.post_context]


@dataclass(frozen=True)
class FeatureRow:
    frame_id: str
    candidate: str
    produced: int
    logp_unigram: float
    logp_forward: float
    sem_dist: float
    phon_dist: float
    uncond_pmi: float
    cond_pmi: float
    rel_backward: float
    lexical_class: str | None = None


def _fluent_view(utt: Utterance) -> tuple[list[str], dict[int, int]]:
    """Tokens with reparanda/fillers/repetitions removed, plus an index map
    from original to fluent positions for the kept tokens."""
    removed: set[int] = set()
    for reg in utt.disfluencies:
        if reg.kind in _REMOVED_KINDS:
            removed.update(range(reg.start, reg.end))
    fluent: list[str] = []
    index_map: dict[int, int] = {}
    for i, tok in enumerate(utt.tokens):
        if i in removed:
            continue
        index_map[i] = len(fluent)
        fluent.append(tok)
    return fluent, index_map


def _gap_covered(utt: Utterance, start: int, end: int) -> bool:
    """True when every token in [start, end) lies inside a repetition or
    filled-pause region; any other intervening material disqualifies."""
    allowed: set[int] = set()
    for reg in utt.disfluencies:
        if reg.kind in ("repetition", "filler"):
            allowed.update(range(reg.start, reg.end))
    return all(i in allowed for i in range(start, end))


def extract_frames(corpus: Corpus) -> tuple[list[SubstitutionFrame], dict]:
    """One frame per qualifying single-word reparandum/repair pair.

    Utterances with several errors yield one frame per error, with the other
    errors already repaired in the frame's contexts.
    """
    frames: list[SubstitutionFrame] = []
    report = {
        "n_pairs": 0,
        "excluded_unequal_length": 0,
        "excluded_multiword": 0,
        "excluded_pos_mismatch": 0,
        "excluded_not_adjacent": 0,
        "excluded_identical": 0,
        "skipped_missing_pos": 0,
    }
    for utt_index, utt in enumerate(corpus):
        if not utt.disfluencies:
            continue
        fluent, index_map = _fluent_view(utt)
        for reg in utt.disfluencies:
            if reg.kind != "repair":
                continue
            report["n_pairs"] += 1
            reparandum = utt.disfluencies[reg.repair_of]
            rep_len = reparandum.end - reparandum.start
            repair_len = reg.end - reg.start
            if rep_len != repair_len:
                report["excluded_unequal_length"] += 1
                continue
            if rep_len != 1:
                report["excluded_multiword"] += 1
                continue
            if reg.start < reparandum.end or not _gap_covered(utt, reparandum.end, reg.start):
                report["excluded_not_adjacent"] += 1
                continue
            if utt.pos is None:
                report["skipped_missing_pos"] += 1
                continue
            error_pos = utt.pos[reparandum.start]
            repair_pos = utt.pos[reg.start]
            if error_pos != repair_pos:
                report["excluded_pos_mismatch"] += 1
                continue
            error = utt.tokens[reparandum.start]
            repair = utt.tokens[reg.start]
            if error == repair:
                report["excluded_identical"] += 1
                continue
            t = index_map[reg.start]
            frames.append(
                SubstitutionFrame(
                    frame_id=f"{utt.conversation_id}:{utt_index}:{reparandum.start}",
                    conversation_id=utt.conversation_id,
                    utt_index=utt_index,
                    pre_context=tuple(fluent[:t]),
                    post_context=tuple(fluent[t + 1 :]),
                    error=error,
                    repair=repair,
                    pos=repair_pos,
                    category=reg.category or reparandum.category,
                )
            )
    report["n_frames"] = len(frames)
    return frames, report


_INFLECTIONAL_SUFFIXES = ("ing", "ed", "es", "er", "est", "s", "d")


def _root(word: str) -> str:
    for suf in _INFLECTIONAL_SUFFIXES:
        if word.endswith(suf) and len(word) - len(suf) >= 3:
            return word[: -len(suf)]
    return word


def label_category(
    error: str,
    repair: str,
    lexicon: PronLexicon | None = None,
    embeddings: EmbeddingTable | None = None,
    sem_threshold: float = 0.4,
) -> str:
    """Heuristic error-category labeler.  NOT authoritative: the taxonomy is
    defined by human annotation; this exists only to rough-label unannotated
    corpora.  Same root -> morphosyntactic; shared onset or coda ->
    phonological, or mixed when the embeddings also place the words close."""

    def _segs(word: str) -> tuple[str, ...]:
        if lexicon is not None and word in lexicon:
            return lexicon[word]
        return tuple(word)

    if _root(error) == _root(repair):
        return "morphosyntactic"
    e, r = _segs(error), _segs(repair)
    shares_onset = e[0] == r[0]
    shares_coda = e[-1] == r[-1]
    if shares_onset or shares_coda:
        if embeddings is not None and error in embeddings and repair in embeddings:
            if semantic_distance(embeddings[error], embeddings[repair]) < sem_threshold:
                return "mixed"
        return "phonological"
    return "semantic"


def assemble_rows(
    frame: SubstitutionFrame,
    vocab: Vocabulary,
    backend,
    unigram: NGramModel,
    embeddings: EmbeddingTable,
    lexicon: PronLexicon,
    features: PhoneticFeatureTable,
    noise_var: float,
    seed: int,
    policy: str = "skip",
    candidates: Sequence[str] | None = None,
    word_class: dict[str, str] | None = None,
    suffix_includes_eos: bool = True,
) -> tuple[list[FeatureRow], dict]:
    """One regression row per candidate word (the whole content vocabulary by
    default): the observed error is the positive class, everything else
    including the repair is negative.

    A single noisy target per frame is derived from the repair; all candidates
    are compared against it.  Passing ``candidates`` restricts the negative
    class to a subset (a cost-saving option for expensive backends; the
    default vocabulary-wide class is the faithful analysis).
    """
    if policy not in ("skip", "strict"):
        raise ValueError("policy must be 'skip' or 'strict'")
    report = {"dropped_candidates": [], "frame_dropped": None}
    if candidates is None:
        candidates = vocab.content_words()
    candidates = list(candidates)
    if frame.error not in vocab or frame.repair not in vocab:
        raise ValueError(f"frame {frame.frame_id}: error/repair missing from vocabulary")

    def _drop_frame(reason: str):
        if policy == "strict":
            raise ValueError(f"frame {frame.frame_id}: {reason}")
        report["frame_dropped"] = reason
        return [], report

    if frame.repair not in embeddings:
        return _drop_frame(f"repair {frame.repair!r} missing from embeddings")
    if frame.repair not in lexicon:
        return _drop_frame(f"repair {frame.repair!r} missing from lexicon")

    sem_target = noisy_semantic_target(
        embeddings[frame.repair], noise_var, derive_seed(seed, frame.frame_id, "sem")
    )
    if noise_var > 0:
        phon_target = noisy_phonetic_target(
            lexicon[frame.repair], features, derive_seed(seed, frame.frame_id, "phon")
        )
    else:
        phon_target = word_features(frame.repair, lexicon, features)

    usable: list[str] = []
    for w in candidates:
        if w in embeddings and w in lexicon:
            usable.append(w)
        else:
            if policy == "strict":
                raise ValueError(f"candidate {w!r} missing from embeddings/lexicon")
            report["dropped_candidates"].append(w)
    if frame.error not in usable:
        return _drop_frame(f"error {frame.error!r} not scorable, no positive row")

    pre = list(frame.pre_context)
    future = list(frame.post_context)
    suf = future + [EOS] if suffix_includes_eos else future
    fwd = score_forward(backend, pre, usable)
    bwd = score_backward(backend, future, usable)
    bi = score_infill(backend, pre, suf, usable)

    rows: list[FeatureRow] = []
    for w in usable:
        logp_uni = cond_logprob(unigram, unigram.vocab.id(w), [])
        rows.append(
            FeatureRow(
                frame_id=frame.frame_id,
                candidate=w,
                produced=int(w == frame.error),
                logp_unigram=logp_uni,
                logp_forward=fwd[w],
                sem_dist=semantic_distance(sem_target, embeddings[w]),
                phon_dist=phonetic_distance(
                    word_features(w, lexicon, features), phon_target
                ),
                uncond_pmi=bwd[w] - logp_uni,
                cond_pmi=bi[w] - fwd[w],
                rel_backward=bwd[w] - fwd[w],
                lexical_class=(word_class or {}).get(w),
            )
        )
    return rows, report


def write_frames_jsonl(frames: Sequence[SubstitutionFrame], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for f in frames:
            rec = {
                "frame_id": f.frame_id,
                "conversation_id": f.conversation_id,
                "utt_index": f.utt_index,
                "pre_context": list(f.pre_context),
                "post_context": list(f.post_context),
                "error": f.error,
                "repair": f.repair,
                "pos": f.pos,
            }
            if f.category is not None:
                rec["category"] = f.category
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def read_frames_jsonl(path: str | Path) -> list[SubstitutionFrame]:
    frames = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            frames.append(
                SubstitutionFrame(
                    frame_id=rec["frame_id"],
                    conversation_id=rec["conversation_id"],
                    utt_index=int(rec["utt_index"]),
                    pre_context=tuple(rec["pre_context"]),
                    post_context=tuple(rec["post_context"]),
                    error=rec["error"],
                    repair=rec["repair"],
                    pos=rec["pos"],
                    category=rec.get("category"),
                )
            )
    return frames


def write_rows_csv(rows: Sequence[FeatureRow], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ROWS_COLUMNS)
        for r in rows:
            writer.writerow(
                [
                    r.frame_id,
                    r.candidate,
                    r.produced,
                    format_float(r.logp_unigram),
                    format_float(r.logp_forward),
                    format_float(r.sem_dist),
                    format_float(r.phon_dist),
                    format_float(r.uncond_pmi),
                    format_float(r.cond_pmi),
                    format_float(r.rel_backward),
                    r.lexical_class or "",
                ]
            )


def read_rows_csv(path: str | Path) -> list[FeatureRow]:
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(
                FeatureRow(
                    frame_id=rec["frame_id"],
                    candidate=rec["candidate"],
                    produced=int(rec["produced"]),
                    logp_unigram=float(rec["logp_unigram"]),
                    logp_forward=float(rec["logp_forward"]),
                    sem_dist=float(rec["sem_dist"]),
                    phon_dist=float(rec["phon_dist"]),
                    uncond_pmi=float(rec["uncond_pmi"]),
                    cond_pmi=float(rec["cond_pmi"]),
                    rel_backward=float(rec["rel_backward"]),
                    lexical_class=rec.get("lexical_class") or None,
                )
            )
    return rows
