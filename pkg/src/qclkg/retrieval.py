"""Embedding store and cosine top-k search over labelled instruction samples."""

from __future__ import annotations

import json
import logging
import math
import operator
import re
import subprocess
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

from .corpus import InstructionSample, sample_from_json, sample_to_json
from .property_model import PropertyClass

log = logging.getLogger(__name__)

INDEX_FORMAT = "qclkg-embedding-index"
INDEX_VERSION = 1


class RetrievalError(Exception):
    pass


class DimensionMismatch(RetrievalError, ValueError):
    pass


class ZeroVector(RetrievalError, ValueError):
    pass


class EmptyIndex(RetrievalError):
    pass


class EmbedderFailure(RetrievalError):
    def __init__(self, message: str, sample_id: str | None = None):
        self.sample_id = sample_id
        super().__init__(f"{sample_id}: {message}" if sample_id else message)


def _dot(a: Sequence[float], b: Sequence[float]) -> float:
    # sum() accumulates left to right, i.e. in index order
    return sum(map(operator.mul, a, b))


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]
    norm: float

    @classmethod
    def of(cls, values: Sequence[float]) -> EmbeddingVector:
        vals = tuple(float(v) for v in values)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("embedding contains non-finite values")
        return cls(vals, math.sqrt(_dot(vals, vals)))

    @property
    def dimension(self) -> int:
        return len(self.values)


def cosine(a: EmbeddingVector, b: EmbeddingVector) -> float:
    if a.dimension != b.dimension:
        raise DimensionMismatch(f"dimension {a.dimension} != {b.dimension}")
    if a.norm == 0 or b.norm == 0:
        raise ZeroVector("cosine is undefined for a zero vector")
    score = _dot(a.values, b.values) / (a.norm * b.norm)
    return min(1.0, max(-1.0, score))


class Embedder(Protocol):
    name: str
    dimension: int

    def embed(self, text: str) -> EmbeddingVector: ...


_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def fnv1a_64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def tokenize(text: str) -> list[str]:
    return [t for t in _TOKEN_SPLIT.split(text.lower()) if t]


class HashingEmbedder:
    """Reference embedder: hashed bag of tokens, L2-normalised.

    Tokens are the lowercase alphanumeric runs of the text; each token goes to
    bucket ``fnv1a_64(utf8(token)) % dimension``. Counts are integers, so the
    output only depends on integer arithmetic plus one square root.
    """

    def __init__(self, dimension: int = 256):
        if dimension < 1:
            raise ValueError("dimension must be positive")
        self.dimension = dimension
        self.name = f"hashing-fnv1a64-d{dimension}"

    def embed(self, text: str) -> EmbeddingVector:
        counts = [0] * self.dimension
        for tok in tokenize(text):
            counts[fnv1a_64(tok.encode("utf-8")) % self.dimension] += 1
        total = sum(c * c for c in counts)
        if total == 0:
            return EmbeddingVector.of([0.0] * self.dimension)
        norm = math.sqrt(total)
        return EmbeddingVector.of([c / norm for c in counts])


class HttpEmbedder:
    """POSTs ``{"text": ...}`` and expects ``{"vector": [...]}`` back."""

    def __init__(self, endpoint: str, dimension: int, name: str | None = None, timeout: float = 30.0):
        self.endpoint = endpoint
        self.dimension = dimension
        self.name = name or f"http:{endpoint}"
        self.timeout = timeout

    def embed(self, text: str) -> EmbeddingVector:
        body = json.dumps({"text": text}).encode("utf-8")
        req = urllib.request.Request(self.endpoint, data=body, headers={"Content-Type": "application/json"})
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                payload = json.loads(resp.read().decode("utf-8"))
        except (OSError, ValueError) as exc:
            raise EmbedderFailure(str(exc)) from exc
        return _checked_vector(payload, self.dimension)


class CommandEmbedder:
    """Talks JSON lines to a long-running subprocess over stdin/stdout."""

    def __init__(self, command: Sequence[str], dimension: int, name: str | None = None):
        self.command = list(command)
        self.dimension = dimension
        self.name = name or f"cmd:{self.command[0]}"
        self._proc: subprocess.Popen | None = None

    def _ensure(self) -> subprocess.Popen:
        if self._proc is None or self._proc.poll() is not None:
            self._proc = subprocess.Popen(
                self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True, encoding="utf-8"
            )
        return self._proc

    def embed(self, text: str) -> EmbeddingVector:
        proc = self._ensure()
        try:
            proc.stdin.write(json.dumps({"text": text}) + "\n")
            proc.stdin.flush()
            line = proc.stdout.readline()
            payload = json.loads(line)
        except (OSError, ValueError) as exc:
            raise EmbedderFailure(str(exc)) from exc
        return _checked_vector(payload, self.dimension)

    def close(self) -> None:
        if self._proc is not None:
            self._proc.stdin.close()
            self._proc.wait(timeout=5)
            self._proc = None


def _checked_vector(payload, dimension: int) -> EmbeddingVector:
    vector = payload.get("vector") if isinstance(payload, dict) else None
    if not isinstance(vector, list) or len(vector) != dimension:
        raise EmbedderFailure(f"expected a vector of {dimension} reals")
    try:
        return EmbeddingVector.of(vector)
    except (TypeError, ValueError) as exc:
        raise EmbedderFailure(str(exc)) from exc


def query_text(instruction: str, sentence: str) -> str:
    return f"{instruction}\n{sentence}"


@dataclass(frozen=True)
class IndexEntry:
    sample_id: str
    vector: EmbeddingVector
    sample: InstructionSample


@dataclass(frozen=True)
class EmbeddingIndex:
    embedder_name: str
    dimension: int
    entries: tuple[IndexEntry, ...]

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class Hit:
    sample_id: str
    score: float
    sample: InstructionSample


def build_index(samples: Sequence[InstructionSample], embedder: Embedder, jobs: int = 1) -> EmbeddingIndex:
    if not samples:
        raise EmptyIndex("cannot build an index from zero samples")

    def embed_one(sample):
        try:
            vec = embedder.embed(query_text(sample.instruction, sample.sentence))
        except EmbedderFailure as exc:
            raise EmbedderFailure(str(exc), sample.sample_id) from exc
        except Exception as exc:
            raise EmbedderFailure(f"{type(exc).__name__}: {exc}", sample.sample_id) from exc
        if vec.dimension != embedder.dimension:
            raise EmbedderFailure(f"got dimension {vec.dimension}, expected {embedder.dimension}", sample.sample_id)
        return IndexEntry(sample.sample_id, vec, sample)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            entries = list(pool.map(embed_one, samples))
    else:
        entries = [embed_one(s) for s in samples]
    if len({e.sample_id for e in entries}) != len(entries):
        raise ValueError("sample ids must be unique")
    return EmbeddingIndex(embedder.name, embedder.dimension, tuple(entries))


def top_k(
    index: EmbeddingIndex,
    query: EmbeddingVector,
    k: int,
    property_class: PropertyClass | None = None,
) -> list[Hit]:
    """Exhaustive cosine ranking; ties keep insertion order."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not index.entries:
        raise EmptyIndex("index is empty")
    if query.dimension != index.dimension:
        raise DimensionMismatch(f"query dimension {query.dimension} != index dimension {index.dimension}")
    scored = []
    for pos, entry in enumerate(index.entries):
        if property_class is not None and entry.sample.property_class is not property_class:
            continue
        scored.append((-cosine(query, entry.vector), pos, entry))
    scored.sort(key=lambda t: (t[0], t[1]))
    return [Hit(e.sample_id, -neg, e.sample) for neg, _, e in scored[:k]]


def save_index(index: EmbeddingIndex, path) -> None:
    header = {
        "format": INDEX_FORMAT,
        "version": INDEX_VERSION,
        "embedder": index.embedder_name,
        "dimension": index.dimension,
        "count": len(index.entries),
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for e in index.entries:
            row = {"id": e.sample_id, "vector": list(e.vector.values), "sample": sample_to_json(e.sample)}
            fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")


def load_index(path) -> EmbeddingIndex:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise RetrievalError(f"{path}: empty index file")
    header = json.loads(lines[0])
    if header.get("format") != INDEX_FORMAT or header.get("version") != INDEX_VERSION:
        raise RetrievalError(f"{path}: unsupported index format {header.get('format')!r} v{header.get('version')}")
    dim = header["dimension"]
    entries = []
    for lineno, line in enumerate(lines[1:], start=2):
        row = json.loads(line)
        vec = EmbeddingVector.of(row["vector"])
        if vec.dimension != dim:
            raise DimensionMismatch(f"{path}:{lineno}: vector dimension {vec.dimension} != {dim}")
        entries.append(IndexEntry(row["id"], vec, sample_from_json(row["sample"], lineno)))
    if len(entries) != header["count"]:
        raise RetrievalError(f"{path}: header says {header['count']} entries, found {len(entries)}")
    return EmbeddingIndex(header["embedder"], dim, tuple(entries))
