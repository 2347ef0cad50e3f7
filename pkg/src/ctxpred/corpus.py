"""Corpus data model: utterances, disfluency regions, vocabulary, JSONL ingestion."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

UNK = "<unk>"
EOS = "<eos>"
PRE = "<PRE>"
SUF = "<SUF>"
MID = "<MID>"
SPECIAL_TOKENS = (UNK, EOS, PRE, SUF, MID)

REGION_KINDS = ("reparandum", "repair", "filler", "repetition")
ERROR_CATEGORIES = ("semantic", "phonological", "mixed", "morphosyntactic")
SPEAKERS = ("A", "B")


class CorpusFormatError(ValueError):
    """A corpus record violated the JSONL schema or its invariants."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass(frozen=True)
class DisfluencyRegion:
    """Half-open token span [start, end) tagged with a disfluency kind.

    ``repair_of`` indexes the linked reparandum region within the same
    utterance's region list and is required when kind == "repair".
    ``category`` optionally carries a substitution-error label.
    """

    kind: str
    start: int
    end: int
    repair_of: int | None = None
    category: str | None = None


@dataclass(frozen=True)
class Utterance:
    conversation_id: str
    speaker: str
    tokens: tuple[str, ...]
    pos: tuple[str, ...] | None = None
    disfluencies: tuple[DisfluencyRegion, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if self.pos is not None:
            object.__setattr__(self, "pos", tuple(self.pos))
        object.__setattr__(self, "disfluencies", tuple(self.disfluencies))
        _validate_utterance(self)

    def __len__(self) -> int:
        return len(self.tokens)

    def text(self) -> str:
        return " ".join(self.tokens)


def _validate_utterance(utt: Utterance) -> None:
    if utt.speaker not in SPEAKERS:
        raise CorpusFormatError(f"speaker must be one of {SPEAKERS}, got {utt.speaker!r}")
    if utt.pos is not None and len(utt.pos) != len(utt.tokens):
        raise CorpusFormatError(
            f"alignment mismatch: {len(utt.pos)} pos tags for {len(utt.tokens)} tokens"
        )
    n = len(utt.tokens)
    occupied: set[int] = set()
    for i, reg in enumerate(utt.disfluencies):
        if reg.kind not in REGION_KINDS:
            raise CorpusFormatError(f"unknown disfluency kind {reg.kind!r}")
        if not (0 <= reg.start < reg.end <= n):
            raise CorpusFormatError(
                f"region [{reg.start}, {reg.end}) out of bounds for {n} tokens"
            )
        span = set(range(reg.start, reg.end))
        if span & occupied:
            raise CorpusFormatError(f"disfluency region {i} overlaps another region")
        occupied |= span
        if reg.kind == "repair":
            if reg.repair_of is None:
                raise CorpusFormatError(f"repair region {i} lacks repair_of")
            if not (0 <= reg.repair_of < len(utt.disfluencies)):
                raise CorpusFormatError(f"repair_of {reg.repair_of} out of range")
            if utt.disfluencies[reg.repair_of].kind != "reparandum":
                raise CorpusFormatError(
                    f"repair_of {reg.repair_of} does not point at a reparandum"
                )
        if reg.category is not None and reg.category not in ERROR_CATEGORIES:
            raise CorpusFormatError(f"unknown error category {reg.category!r}")


@dataclass(frozen=True)
class Corpus:
    utterances: tuple[Utterance, ...]
    n_skipped: int = 0

    def __post_init__(self):
        object.__setattr__(self, "utterances", tuple(self.utterances))

    def __len__(self) -> int:
        return len(self.utterances)

    def __iter__(self) -> Iterator[Utterance]:
        return iter(self.utterances)

    def __getitem__(self, i: int) -> Utterance:
        return self.utterances[i]

    def token_count(self) -> int:
        return sum(len(u) for u in self.utterances)

    def to_jsonl(self) -> str:
        return "".join(serialize_utterance(u) + "\n" for u in self.utterances)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")


def serialize_utterance(utt: Utterance) -> str:
    """Canonical one-line JSON form; key order is fixed, empty fields omitted."""
    rec: dict = {"conversation_id": utt.conversation_id, "speaker": utt.speaker}
    rec["tokens"] = list(utt.tokens)
    if utt.pos is not None:
        rec["pos"] = list(utt.pos)
    if utt.disfluencies:
        regions = []
        for r in utt.disfluencies:
            d: dict = {"kind": r.kind, "start": r.start, "end": r.end}
            if r.repair_of is not None:
                d["repair_of"] = r.repair_of
            if r.category is not None:
                d["category"] = r.category
            regions.append(d)
        rec["disfluencies"] = regions
    return json.dumps(rec, ensure_ascii=False)


_RECORD_KEYS = {"conversation_id", "speaker", "tokens", "text", "pos", "disfluencies"}
_REGION_KEYS = {"kind", "start", "end", "repair_of", "category"}


def _parse_record(rec: dict, line: int, lowercase: bool) -> Utterance:
    if not isinstance(rec, dict):
        raise CorpusFormatError("record is not a JSON object", line)
    unknown = set(rec) - _RECORD_KEYS
    if unknown:
        raise CorpusFormatError(f"unknown keys {sorted(unknown)}", line)
    if "tokens" in rec and "text" in rec:
        raise CorpusFormatError("record has both 'tokens' and 'text'", line)
    if "tokens" in rec:
        tokens = rec["tokens"]
        if not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens):
            raise CorpusFormatError("'tokens' must be a list of strings", line)
    elif "text" in rec:
        if not isinstance(rec["text"], str):
            raise CorpusFormatError("'text' must be a string", line)
        tokens = rec["text"].split()
    else:
        raise CorpusFormatError("record has neither 'tokens' nor 'text'", line)
    if lowercase:
        tokens = [t.lower() for t in tokens]
    pos = rec.get("pos")
    if pos is not None and (
        not isinstance(pos, list) or not all(isinstance(t, str) for t in pos)
    ):
        raise CorpusFormatError("'pos' must be a list of strings", line)
    regions = []
    for j, d in enumerate(rec.get("disfluencies") or []):
        if not isinstance(d, dict):
            raise CorpusFormatError(f"disfluency {j} is not an object", line)
        unknown = set(d) - _REGION_KEYS
        if unknown:
            raise CorpusFormatError(f"disfluency {j}: unknown keys {sorted(unknown)}", line)
        try:
            regions.append(
                DisfluencyRegion(
                    kind=d["kind"],
                    start=int(d["start"]),
                    end=int(d["end"]),
                    repair_of=d.get("repair_of"),
                    category=d.get("category"),
                )
            )
        except (KeyError, TypeError, ValueError) as e:
            raise CorpusFormatError(f"disfluency {j}: {e}", line) from e
    try:
        return Utterance(
            conversation_id=str(rec.get("conversation_id", "")),
            speaker=rec.get("speaker", "A"),
            tokens=tokens,
            pos=pos,
            disfluencies=regions,
        )
    except CorpusFormatError as e:
        raise CorpusFormatError(str(e), line) from e


def load_corpus(path: str | Path, strict: bool = True, lowercase: bool = True) -> Corpus:
    """Load a line-delimited JSON corpus.

    In strict mode any malformed line raises CorpusFormatError with its line
    number; in lenient mode unparseable lines are skipped and counted in
    ``Corpus.n_skipped``.  Alignment and disfluency-structure violations are
    errors in both modes.
    """
    utterances: list[Utterance] = []
    skipped = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                rec = json.loads(raw)
            except json.JSONDecodeError as e:
                if strict:
                    raise CorpusFormatError(f"invalid JSON ({e.msg})", lineno) from e
                skipped += 1
                continue
            try:
                utterances.append(_parse_record(rec, lineno, lowercase))
            except CorpusFormatError as e:
                # Structural invariant breaches are data corruption: always fatal.
                fatal = "alignment mismatch" in str(e) or "repair" in str(e) or "region" in str(e)
                if strict or fatal:
                    raise
                skipped += 1
    return Corpus(utterances=tuple(utterances), n_skipped=skipped)


@dataclass(frozen=True)
class Vocabulary:
    """Bijective word/id mapping with reserved specials at fixed low ids."""

    id_to_word: tuple[str, ...]
    min_count: int = 1
    speaker_tags: tuple[str, ...] = ()
    word_to_id: dict[str, int] = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        mapping = {w: i for i, w in enumerate(self.id_to_word)}
        if len(mapping) != len(self.id_to_word):
            raise ValueError("duplicate words in vocabulary")
        for sp in SPECIAL_TOKENS:
            if sp not in mapping:
                raise ValueError(f"special token {sp} missing from vocabulary")
        object.__setattr__(self, "word_to_id", mapping)

    def __len__(self) -> int:
        return len(self.id_to_word)

    def __contains__(self, word: str) -> bool:
        return word in self.word_to_id

    def id(self, word: str) -> int:
        """Map a word to its id, falling back to <unk>."""
        return self.word_to_id.get(word, self.word_to_id[UNK])

    def word(self, wid: int) -> str:
        return self.id_to_word[wid]

    @property
    def unk_id(self) -> int:
        return self.word_to_id[UNK]

    @property
    def eos_id(self) -> int:
        return self.word_to_id[EOS]

    def content_words(self) -> list[str]:
        """Vocabulary entries excluding specials and speaker-tag tokens."""
        skip = set(SPECIAL_TOKENS) | set(self.speaker_tags)
        return [w for w in self.id_to_word if w not in skip]

    def to_json(self) -> str:
        payload = {
            "format": "ctxpred-vocab",
            "version": 1,
            "min_count": self.min_count,
            "speaker_tags": list(self.speaker_tags),
            "words": list(self.id_to_word),
        }
        return json.dumps(payload, ensure_ascii=False, sort_keys=True, separators=(",", ":")) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        if payload.get("format") != "ctxpred-vocab":
            raise ValueError(f"{path}: not a vocabulary file")
        return cls(
            id_to_word=tuple(payload["words"]),
            min_count=int(payload["min_count"]),
            speaker_tags=tuple(payload.get("speaker_tags", ())),
        )


def build_vocab(
    corpus: Corpus, min_count: int = 1, include_speaker_tags: bool = False
) -> Vocabulary:
    """Build the word/id map: specials first, then words with frequency >= min_count.

    Content ids are assigned by descending corpus frequency with alphabetical
    ties, so two loads of the same corpus produce identical maps.
    """
    if len(corpus) == 0:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    freq: Counter[str] = Counter()
    for utt in corpus:
        freq.update(utt.tokens)
    kept = sorted(
        (w for w, c in freq.items() if c >= min_count and w not in SPECIAL_TOKENS),
        key=lambda w: (-freq[w], w),
    )
    tags: tuple[str, ...] = ()
    if include_speaker_tags:
        tags = tuple(sorted({u.speaker for u in corpus}))
        kept = [w for w in kept if w not in tags]
    return Vocabulary(
        id_to_word=tuple(SPECIAL_TOKENS) + tags + tuple(kept),
        min_count=min_count,
        speaker_tags=tags,
    )


def lm_sequences(
    corpus: Corpus | Iterable[Utterance], include_speaker_tags: bool = False
) -> Iterator[list[str]]:
    """Token sequences as consumed by LM training.

    When requested, the speaker tag is materialized as the first token of the
    utterance body.
    """
    for utt in corpus:
        if include_speaker_tags:
            yield [utt.speaker, *utt.tokens]
        else:
            yield list(utt.tokens)
