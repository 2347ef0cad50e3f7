"""Uniform probability-backend abstraction and batch corpus scoring.

A backend answers forward and infill (bidirectional) queries over a fixed
vocabulary.  The in-process backend wraps n-gram models; wire backends speak
a small JSON protocol over HTTP POST /score or line-delimited JSON on stdio:

  request:  {"mode": "forward"|"infill", "pre": [str], "suf": [str],
             "candidates": [str]}
  response: {"logprobs": {str: float}, "model_id": str}

Backward probabilities come from a direction=backward n-gram model when one
is available; otherwise they are approximated by an infill query with an
empty prefix (the only route a wire backend has).
"""

from __future__ import annotations

import hashlib
import json
import subprocess
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .corpus import EOS, Corpus
from .ngram import NGramModel, cond_logprob, infill_distribution

__all__ = [
    "PredictabilityRecord",
    "TransportError",
    "ProtocolError",
    "NgramBackend",
    "HttpBackend",
    "StdioBackend",
    "ScoreCache",
    "score_forward",
    "score_infill",
    "score_backward",
    "batch_score_corpus",
]


class TransportError(RuntimeError):
    """The wire backend could not be reached or died mid-conversation."""


class ProtocolError(ValueError):
    """The backend rejected the request or answered off-protocol."""


@dataclass(frozen=True)
class PredictabilityRecord:
    conversation_id: str
    utt_index: int
    t: int
    word: str
    logp_unigram: float
    logp_forward: float
    logp_backward: float
    logp_bidirectional: float


class NgramBackend:
    """In-process backend over a forward (and optionally backward) n-gram model."""

    def __init__(self, forward_model: NGramModel, backward_model: NGramModel | None = None):
        if forward_model.direction != "forward":
            raise ValueError("forward_model must have direction=forward")
        if backward_model is not None and backward_model.direction != "backward":
            raise ValueError("backward_model must have direction=backward")
        self.forward_model = forward_model
        self.backward_model = backward_model
        self._id: str | None = None

    @property
    def backend_id(self) -> str:
        if self._id is None:
            h = hashlib.sha256()
            for model in (self.forward_model, self.backward_model):
                if model is None:
                    h.update(b"-")
                    continue
                h.update(
                    json.dumps(
                        {
                            "order": model.order,
                            "alpha": model.alpha,
                            "direction": model.direction,
                            "include_unk": model.include_unk,
                            "words": model.vocab.id_to_word,
                            "counts": sorted(
                                (list(c), sorted(w.items())) for c, w in model.counts.items()
                            ),
                        },
                        sort_keys=True,
                    ).encode()
                )
            self._id = "ngram:" + h.hexdigest()[:16]
        return self._id

    def _map(self, word: str, unk_out: set[str] | None) -> str:
        if word not in self.forward_model.vocab:
            if unk_out is not None:
                unk_out.add(word)
            return "<unk>"
        return word

    def score_forward(
        self, pre: Sequence[str], candidates: Sequence[str], unk_out: set[str] | None = None
    ) -> dict[str, float]:
        return {
            w: cond_logprob(self.forward_model, self._map(w, unk_out), pre)
            for w in candidates
        }

    def score_infill(
        self,
        pre: Sequence[str],
        suf: Sequence[str],
        candidates: Sequence[str],
        unk_out: set[str] | None = None,
    ) -> dict[str, float]:
        if not suf:
            return self.score_forward(pre, candidates, unk_out)
        dist = infill_distribution(self.forward_model, pre, suf)
        return {w: dist[self._map(w, unk_out)] for w in candidates}

    def score_backward(
        self, suf: Sequence[str], candidates: Sequence[str], unk_out: set[str] | None = None
    ) -> dict[str, float]:
        if self.backward_model is not None:
            context = list(reversed(suf))
            return {
                w: cond_logprob(self.backward_model, self._map(w, unk_out), context)
                for w in candidates
            }
        # Approximation toggle: infill with an empty prefix under the forward model.
        return self.score_infill([], suf, candidates, unk_out)


class HttpBackend:
    """Wire backend over HTTP POST /score with a bounded retry policy."""

    def __init__(self, url: str, retries: int = 2, timeout: float = 60.0):
        import requests

        self.url = url.rstrip("/")
        self.retries = retries
        self.timeout = timeout
        self._session = requests.Session()
        self._model_id: str | None = None

    @property
    def backend_id(self) -> str:
        return f"http:{self.url}" + (f":{self._model_id}" if self._model_id else "")

    def _post(self, payload: dict) -> dict:
        import requests

        last: Exception | None = None
        for _ in range(self.retries + 1):
            try:
                resp = self._session.post(
                    self.url + "/score", json=payload, timeout=self.timeout
                )
            except requests.RequestException as e:
                last = e
                continue
            if 400 <= resp.status_code < 500:
                raise ProtocolError(f"backend rejected request ({resp.status_code}): {resp.text}")
            if resp.status_code >= 500:
                last = TransportError(f"backend fault ({resp.status_code}): {resp.text}")
                continue
            try:
                body = resp.json()
            except ValueError as e:
                raise ProtocolError(f"non-JSON response: {e}") from e
            if "logprobs" not in body:
                raise ProtocolError(f"response missing 'logprobs': {body}")
            self._model_id = body.get("model_id", self._model_id)
            return body
        raise TransportError(f"backend unreachable after {self.retries + 1} attempts: {last}")

    def _score(self, mode: str, pre, suf, candidates, unk_out) -> dict[str, float]:
        body = self._post(
            {"mode": mode, "pre": list(pre), "suf": list(suf), "candidates": list(candidates)}
        )
        logprobs = body["logprobs"]
        missing = [w for w in candidates if w not in logprobs]
        if missing:
            raise ProtocolError(f"response missing candidates {missing[:5]}")
        if unk_out is not None:
            unk_out.update(body.get("unk_candidates", ()))
        return {w: float(logprobs[w]) for w in candidates}

    def score_forward(self, pre, candidates, unk_out=None):
        return self._score("forward", pre, [], candidates, unk_out)

    def score_infill(self, pre, suf, candidates, unk_out=None):
        return self._score("infill", pre, suf, candidates, unk_out)

    def score_backward(self, suf, candidates, unk_out=None):
        return self._score("infill", [], suf, candidates, unk_out)


class StdioBackend:
    """Wire backend over a child process speaking line-delimited JSON."""

    def __init__(self, cmd: Sequence[str], retries: int = 1):
        self.cmd = list(cmd)
        self.retries = retries
        self._proc: subprocess.Popen | None = None
        self._lock = threading.Lock()

    @property
    def backend_id(self) -> str:
        return "stdio:" + " ".join(self.cmd)

    def _ensure(self) -> subprocess.Popen:
        if self._proc is None or self._proc.poll() is not None:
            try:
                self._proc = subprocess.Popen(
                    self.cmd,
                    stdin=subprocess.PIPE,
                    stdout=subprocess.PIPE,
                    text=True,
                    bufsize=1,
                )
            except OSError as e:
                raise TransportError(f"cannot start backend process: {e}") from e
        return self._proc

    def close(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            self._proc.stdin.close()
            self._proc.wait(timeout=10)
        self._proc = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _roundtrip(self, payload: dict) -> dict:
        last: Exception | None = None
        for _ in range(self.retries + 1):
            with self._lock:
                try:
                    proc = self._ensure()
                    proc.stdin.write(json.dumps(payload) + "\n")
                    proc.stdin.flush()
                    line = proc.stdout.readline()
                except (BrokenPipeError, OSError, TransportError) as e:
                    last = e
                    self._proc = None
                    continue
            if not line:
                last = TransportError("backend process closed its output")
                self._proc = None
                continue
            try:
                body = json.loads(line)
            except json.JSONDecodeError as e:
                raise ProtocolError(f"non-JSON response line: {line[:200]!r}") from e
            if "error" in body:
                raise ProtocolError(f"backend error: {body['error']}")
            if "logprobs" not in body:
                raise ProtocolError(f"response missing 'logprobs': {body}")
            return body
        raise TransportError(f"stdio backend unavailable: {last}")

    def _score(self, mode, pre, suf, candidates, unk_out) -> dict[str, float]:
        body = self._roundtrip(
            {"mode": mode, "pre": list(pre), "suf": list(suf), "candidates": list(candidates)}
        )
        logprobs = body["logprobs"]
        missing = [w for w in candidates if w not in logprobs]
        if missing:
            raise ProtocolError(f"response missing candidates {missing[:5]}")
        if unk_out is not None:
            unk_out.update(body.get("unk_candidates", ()))
        return {w: float(logprobs[w]) for w in candidates}

    def score_forward(self, pre, candidates, unk_out=None):
        return self._score("forward", pre, [], candidates, unk_out)

    def score_infill(self, pre, suf, candidates, unk_out=None):
        return self._score("infill", pre, suf, candidates, unk_out)

    def score_backward(self, suf, candidates, unk_out=None):
        return self._score("infill", [], suf, candidates, unk_out)


def score_forward(backend, pre, candidates, unk_out: set[str] | None = None) -> dict[str, float]:
    """Per-candidate log p(w | pre) from the backend."""
    if not candidates:
        raise ValueError("candidates must be non-empty")
    return backend.score_forward(pre, candidates, unk_out)


def score_infill(
    backend, pre, suf, candidates, unk_out: set[str] | None = None
) -> dict[str, float]:
    """Per-candidate log p(w | pre, suf); an empty suffix reduces to score_forward."""
    if not candidates:
        raise ValueError("candidates must be non-empty")
    return backend.score_infill(pre, suf, candidates, unk_out)


def score_backward(backend, suf, candidates, unk_out: set[str] | None = None) -> dict[str, float]:
    """Per-candidate log p(w | suf)."""
    if not candidates:
        raise ValueError("candidates must be non-empty")
    return backend.score_backward(suf, candidates, unk_out)


class ScoreCache:
    """Content-addressed response cache, optionally persisted as JSONL.

    Keys cover the backend identity and the full query, so a cache hit is
    semantically indistinguishable from a live call.  Access is serialized.
    """

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._mem: dict[str, dict[str, float]] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0
        if self.path is not None and self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    if not line.strip():
                        continue
                    entry = json.loads(line)
                    self._mem[entry["key"]] = entry["logprobs"]

    @staticmethod
    def key(backend_id: str, mode: str, pre, suf, candidates) -> str:
        payload = json.dumps(
            {
                "backend": backend_id,
                "mode": mode,
                "pre": list(pre),
                "suf": list(suf),
                "candidates": sorted(candidates),
            },
            sort_keys=True,
            ensure_ascii=False,
        )
        return hashlib.sha256(payload.encode()).hexdigest()

    def get(self, key: str) -> dict[str, float] | None:
        with self._lock:
            hit = self._mem.get(key)
            if hit is None:
                self.misses += 1
            else:
                self.hits += 1
            return hit

    def put(self, key: str, logprobs: dict[str, float]) -> None:
        with self._lock:
            if key in self._mem:
                return
            self._mem[key] = dict(logprobs)
            if self.path is not None:
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps({"key": key, "logprobs": logprobs}) + "\n")


def _cached(cache: ScoreCache | None, backend, mode: str, pre, suf, candidates, unk_out):
    if cache is None:
        fn = {
            "forward": lambda: backend.score_forward(pre, candidates, unk_out),
            "backward": lambda: backend.score_backward(suf, candidates, unk_out),
            "infill": lambda: backend.score_infill(pre, suf, candidates, unk_out),
        }[mode]
        return fn()
    key = ScoreCache.key(backend.backend_id, mode, pre, suf, candidates)
    hit = cache.get(key)
    if hit is not None:
        return {w: hit[w] for w in candidates}
    result = _cached(None, backend, mode, pre, suf, candidates, unk_out)
    cache.put(key, result)
    return result


def batch_score_corpus(
    backend,
    corpus: Corpus,
    unigram: NGramModel,
    cache: ScoreCache | None = None,
    jobs: int = 1,
    suffix_includes_eos: bool = True,
) -> tuple[list[PredictabilityRecord], dict]:
    """Score every (utterance, position): one PredictabilityRecord per token.

    Forward uses the past context, backward the future context, bidirectional
    an infill query over both.  Per-utterance failures are collected in the
    returned report and do not abort the run.
    """
    if unigram.order != 1:
        raise ValueError("the unigram model must have order 1")
    report: dict = {"failed": [], "unk_candidates": set()}

    def _one(args) -> list[PredictabilityRecord]:
        i, utt = args
        unk: set[str] = set()
        out = []
        tokens = list(utt.tokens)
        for t, word in enumerate(tokens):
            pre = tokens[:t]
            future = tokens[t + 1 :]
            suf = future + [EOS] if suffix_includes_eos else future
            fwd = _cached(cache, backend, "forward", pre, [], [word], unk)[word]
            bwd = _cached(cache, backend, "backward", [], future, [word], unk)[word]
            bi = _cached(cache, backend, "infill", pre, suf, [word], unk)[word]
            out.append(
                PredictabilityRecord(
                    conversation_id=utt.conversation_id,
                    utt_index=i,
                    t=t,
                    word=word,
                    logp_unigram=cond_logprob(unigram, unigram.vocab.id(word), []),
                    logp_forward=fwd,
                    logp_backward=bwd,
                    logp_bidirectional=bi,
                )
            )
        report["unk_candidates"] |= unk
        return out

    indexed = list(enumerate(corpus))
    results: dict[int, list[PredictabilityRecord]] = {}
    if jobs <= 1:
        for i, utt in indexed:
            try:
                results[i] = _one((i, utt))
            except Exception as e:  # noqa: BLE001 - reported per utterance
                report["failed"].append({"utt_index": i, "error": str(e)})
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futs = {pool.submit(_one, (i, utt)): i for i, utt in indexed}
            for fut, i in futs.items():
                try:
                    results[i] = fut.result()
                except Exception as e:  # noqa: BLE001
                    report["failed"].append({"utt_index": i, "error": str(e)})
        report["failed"].sort(key=lambda d: d["utt_index"])
    records: list[PredictabilityRecord] = []
    for i in sorted(results):
        records.extend(results[i])
    report["unk_candidates"] = sorted(report["unk_candidates"])
    return records, report


RECORD_COLUMNS = (
    "conversation_id",
    "utt_index",
    "t",
    "word",
    "logp_unigram",
    "logp_forward",
    "logp_backward",
    "logp_bidirectional",
)


def write_records_csv(records: Sequence[PredictabilityRecord], path: str | Path) -> None:
    import csv

    from .measures import format_float

    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RECORD_COLUMNS)
        for r in records:
            writer.writerow(
                [
                    r.conversation_id,
                    r.utt_index,
                    r.t,
                    r.word,
                    format_float(r.logp_unigram),
                    format_float(r.logp_forward),
                    format_float(r.logp_backward),
                    format_float(r.logp_bidirectional),
                ]
            )


def read_records_csv(path: str | Path) -> list[PredictabilityRecord]:
    import csv

    records = []
    with open(path, encoding="utf-8", newline="") as fh:
        for rec in csv.DictReader(fh):
            records.append(
                PredictabilityRecord(
                    conversation_id=rec["conversation_id"],
                    utt_index=int(rec["utt_index"]),
                    t=int(rec["t"]),
                    word=rec["word"],
                    logp_unigram=float(rec["logp_unigram"]),
                    logp_forward=float(rec["logp_forward"]),
                    logp_backward=float(rec["logp_backward"]),
                    logp_bidirectional=float(rec["logp_bidirectional"]),
                )
            )
    return records
