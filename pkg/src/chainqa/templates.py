"""Question-template registry and top-K cosine matching."""
from __future__ import annotations

import hashlib
import re
import threading
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np
from scipy import sparse

MASK = "[mask]"
DEFAULT_DIM = 1024
DEFAULT_TOP_K = 3

_TOKEN_RE = re.compile(r"\[mask\]|\w+", re.UNICODE)
_GENERATED_RE = re.compile(r"<GENERATED>-\d+")


class TemplateError(ValueError):
    pass


class Embedder(Protocol):
    dim: int

    def embed(self, text: str) -> np.ndarray: ...


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def _bucket(token: str, dim: int) -> int:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % dim


class HashingEmbedder:
    """Hashed term-frequency bag of words; deterministic across processes."""

    thread_safe = True

    def __init__(self, dim: int = DEFAULT_DIM):
        self.dim = dim

    def _counts(self, text: str) -> Counter[int]:
        if not text or not text.strip():
            raise TemplateError("cannot embed empty text")
        return Counter(_bucket(t, self.dim) for t in tokenize(text))

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim)
        for idx, n in self._counts(text).items():
            vec[idx] = n
        return vec

    def embed_sparse(self, texts: Sequence[str]) -> sparse.csr_matrix:
        rows, cols, vals = [], [], []
        for i, text in enumerate(texts):
            for idx, n in self._counts(text).items():
                rows.append(i)
                cols.append(idx)
                vals.append(float(n))
        return sparse.csr_matrix((vals, (rows, cols)), shape=(len(texts), self.dim))


class _SerializedEmbedder:
    """Wraps an embedder that is not declared thread-safe."""

    def __init__(self, inner: Embedder):
        self.inner = inner
        self.dim = inner.dim
        self._lock = threading.Lock()

    def embed(self, text: str) -> np.ndarray:
        with self._lock:
            return self.inner.embed(text)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


@dataclass(frozen=True)
class QuestionTemplate:
    id: str
    pattern: str

    def __post_init__(self):
        if self.pattern.count(MASK) != 1:
            raise TemplateError(f"template {self.id!r} must contain exactly one {MASK}")


@dataclass(frozen=True)
class TemplateMatch:
    template_id: str
    score: float


class TemplateRegistry:
    """Templates plus their precomputed embeddings. Immutable after construction."""

    def __init__(self, templates: Iterable[QuestionTemplate], embedder: Embedder | None = None):
        self.templates: dict[str, QuestionTemplate] = {}
        for t in templates:
            if t.id in self.templates:
                raise TemplateError(f"duplicate template id {t.id!r}")
            self.templates[t.id] = t
        embedder = embedder or HashingEmbedder()
        if not getattr(embedder, "thread_safe", False):
            embedder = _SerializedEmbedder(embedder)
        self.embedder = embedder
        self._ids = sorted(self.templates)
        self._vectors = {tid: embedder.embed(self.templates[tid].pattern) for tid in self._ids}

    def __len__(self) -> int:
        return len(self.templates)

    def __getitem__(self, tid: str) -> QuestionTemplate:
        return self.templates[tid]

    def ids(self) -> list[str]:
        return list(self._ids)

    def vector(self, tid: str) -> np.ndarray:
        return self._vectors[tid]

    def by_pattern(self, pattern: str) -> QuestionTemplate | None:
        for tid in self._ids:
            if self.templates[tid].pattern == pattern:
                return self.templates[tid]
        return None


def match_templates(registry: TemplateRegistry, subq: str, k: int = DEFAULT_TOP_K) -> list[TemplateMatch]:
    """Rank templates by cosine similarity to ``subq``; highest first, ties by id."""
    if len(registry) == 0:
        raise TemplateError("template registry is empty")
    if k < 1:
        raise TemplateError("k must be >= 1")
    q = registry.embedder.embed(subq)
    # rounding makes mathematically equal scores tie-break by id despite float noise
    scored = [TemplateMatch(tid, round(cosine(q, registry.vector(tid)), 12)) for tid in registry.ids()]
    scored.sort(key=lambda m: (-m.score, m.template_id))
    return scored[:k]


def mask_question(question: str, seeds: Iterable[str] = ()) -> str:
    """Put the question in template space: seed mentions and generated refs become ``[mask]``."""
    if MASK in question:
        return question
    out = _GENERATED_RE.sub(MASK, question)
    if MASK in out:
        return out
    for seed in sorted(seeds, key=len, reverse=True):
        if seed and seed in out:
            return out.replace(seed, MASK, 1)
    return out


def fill_mask(question: str, seeds: Sequence[str]) -> str:
    if MASK not in question:
        return question
    return question.replace(MASK, ", ".join(seeds), 1)


def load_templates(path: str | Path) -> list[QuestionTemplate]:
    """Read ``id<TAB>pattern`` lines; blank lines and ``#`` comments ignored."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            tid, sep, pattern = line.partition("\t")
            if not sep:
                raise TemplateError(f"{path}:{line_no}: expected id<TAB>pattern")
            out.append(QuestionTemplate(tid.strip(), pattern.strip()))
    return out
