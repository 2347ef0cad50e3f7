"""Noisy semantic/phonetic target generation and the two distance features.

The production target (a self-repair) is perturbed along two channels:
Gaussian noise on its embedding vector, and random categorical flips of
phonetic feature cells.  Communicative alignment of a candidate word is then
its cosine distance to the noisy embedding and its feature-weighted edit
distance to the noisy phonetic matrix.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

FEATURE_VALUES = ("+", "-", "0")
N_FEATURES = 22

FeatureMatrix = list[list[str]]


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from arbitrary labels; independent of process state."""
    digest = hashlib.sha256(":".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


@dataclass(frozen=True)
class EmbeddingTable:
    vectors: dict[str, np.ndarray]
    dim: int

    def __contains__(self, word: str) -> bool:
        return word in self.vectors

    def __getitem__(self, word: str) -> np.ndarray:
        return self.vectors[word]

    def get(self, word: str):
        return self.vectors.get(word)


def load_embeddings(path: str | Path) -> EmbeddingTable:
    """Text format: one "word v1 ... v_dim" per line; a fasttext-style
    count/dim header line is tolerated and skipped."""
    vectors: dict[str, np.ndarray] = {}
    dim: int | None = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            if lineno == 1 and len(parts) == 2 and parts[0].isdigit() and parts[1].isdigit():
                continue
            word, values = parts[0], parts[1:]
            try:
                vec = np.array([float(v) for v in values])
            except ValueError as e:
                raise ValueError(f"{path} line {lineno}: non-numeric value ({e})") from e
            if dim is None:
                dim = len(vec)
                if dim == 0:
                    raise ValueError(f"{path} line {lineno}: empty vector")
            elif len(vec) != dim:
                raise ValueError(
                    f"{path} line {lineno}: dimension mismatch ({len(vec)} != {dim})"
                )
            if not np.all(np.isfinite(vec)):
                raise ValueError(f"{path} line {lineno}: non-finite entry")
            vectors[word] = vec
    if not vectors:
        raise ValueError(f"{path}: no vectors found")
    return EmbeddingTable(vectors=vectors, dim=dim)


def noisy_semantic_target(vec: np.ndarray, noise_var: float, seed: int) -> np.ndarray:
    """vec + eps with eps ~ N(0, noise_var) i.i.d. per coordinate."""
    if noise_var < 0:
        raise ValueError("noise_var must be >= 0")
    vec = np.asarray(vec, dtype=float)
    if noise_var == 0:
        return vec.copy()
    rng = np.random.default_rng(seed)
    return vec + rng.normal(0.0, math.sqrt(noise_var), size=vec.shape)


def semantic_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine distance 1 - cos(a, b), in [0, 2]."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("vectors must share dimension")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine distance undefined for a zero vector")
    cos = float(a @ b) / (na * nb)
    return 1.0 - max(-1.0, min(1.0, cos))


@dataclass(frozen=True)
class PhoneticFeatureTable:
    features: dict[str, tuple[str, ...]]

    def __contains__(self, segment: str) -> bool:
        return segment in self.features

    def __getitem__(self, segment: str) -> tuple[str, ...]:
        return self.features[segment]

    def segments(self) -> list[str]:
        return sorted(self.features)


def load_feature_table(path: str | Path) -> PhoneticFeatureTable:
    """TSV with a header row (segment, f1..f22); cells in {+, -, 0}."""
    features: dict[str, tuple[str, ...]] = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if len(header) != N_FEATURES + 1:
            raise ValueError(
                f"{path}: header has {len(header) - 1} feature columns, expected {N_FEATURES}"
            )
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            cells = line.rstrip("\n").split("\t")
            if len(cells) != N_FEATURES + 1:
                raise ValueError(f"{path} line {lineno}: expected {N_FEATURES + 1} columns")
            seg, values = cells[0], cells[1:]
            bad = [v for v in values if v not in FEATURE_VALUES]
            if bad:
                raise ValueError(f"{path} line {lineno}: invalid cell values {bad}")
            features[seg] = tuple(values)
    if not features:
        raise ValueError(f"{path}: empty feature table")
    return PhoneticFeatureTable(features=features)


@dataclass(frozen=True)
class PronLexicon:
    pron: dict[str, tuple[str, ...]]

    def __contains__(self, word: str) -> bool:
        return word in self.pron

    def __getitem__(self, word: str) -> tuple[str, ...]:
        return self.pron[word]

    def validate_against(self, table: PhoneticFeatureTable) -> None:
        for word, segs in self.pron.items():
            missing = [s for s in segs if s not in table]
            if missing:
                raise ValueError(f"lexicon entry {word!r} uses unknown segments {missing}")


def load_lexicon(path: str | Path) -> PronLexicon:
    """TSV: word <tab> space-separated IPA segments."""
    pron: dict[str, tuple[str, ...]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 2:
                raise ValueError(f"{path} line {lineno}: expected 'word<TAB>segments'")
            pron[parts[0]] = tuple(parts[1].split())
    if not pron:
        raise ValueError(f"{path}: empty lexicon")
    return PronLexicon(pron=pron)


def word_features(word: str, lexicon: PronLexicon, table: PhoneticFeatureTable) -> FeatureMatrix:
    segs = lexicon[word]
    missing = [s for s in segs if s not in table]
    if missing:
        raise ValueError(f"unknown segment(s) {missing} in {word!r}")
    return [list(table[s]) for s in segs]


def noisy_phonetic_target(
    segments: Sequence[str], table: PhoneticFeatureTable, seed: int
) -> FeatureMatrix:
    """Randomly perturb feature cells of the target's segment matrix.

    k ~ U(1, N) positions are drawn i.i.d. with replacement; each draw picks
    one of the 22 features uniformly and resamples its value from the other
    two categories.  A position drawn twice may be re-perturbed.
    """
    if not segments:
        raise ValueError("segments must be non-empty")
    missing = [s for s in segments if s not in table]
    if missing:
        raise ValueError(f"unknown segment(s) {missing}")
    matrix: FeatureMatrix = [list(table[s]) for s in segments]
    n = len(matrix)
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, n + 1))
    positions = rng.integers(0, n, size=k)
    for p in positions:
        f = int(rng.integers(0, N_FEATURES))
        current = matrix[p][f]
        options = [v for v in FEATURE_VALUES if v != current]
        matrix[p][f] = options[int(rng.integers(0, len(options)))]
    return matrix


def segment_substitution_cost(a: Sequence[str], b: Sequence[str]) -> float:
    """Fraction of differing feature cells; 0 for identical segments, <= 1."""
    if len(a) != len(b):
        raise ValueError("feature vectors must have equal length")
    return sum(x != y for x, y in zip(a, b)) / len(a)


def phonetic_distance(a: FeatureMatrix, b: FeatureMatrix) -> float:
    """Minimal-cost alignment: substitution costs the differing-cell fraction,
    insertions and deletions cost 1; computed by dynamic programming."""
    m, n = len(a), len(b)
    dist = np.zeros((m + 1, n + 1))
    dist[:, 0] = np.arange(m + 1)
    dist[0, :] = np.arange(n + 1)
    for i in range(1, m + 1):
        for j in range(1, n + 1):
            sub = dist[i - 1, j - 1] + segment_substitution_cost(a[i - 1], b[j - 1])
            dist[i, j] = min(sub, dist[i - 1, j] + 1.0, dist[i, j - 1] + 1.0)
    return float(dist[m, n])
