"""Embedding vectors, cosine geometry, and the offline test embedding provider.

The clustering stage and the knowledge-base self-update both consume the same
vector geometry defined here. Distances are cosine distances in [0, 2]:

    dist(u, v) = 1 - (u . v) / (||u|| ||v||)

The bundled test provider hashes character trigrams into a fixed number of
signed buckets so the whole pipeline runs deterministically with no model
service. Real embedding services plug in behind the same interface.
"""
from __future__ import annotations

import hashlib
import math
import struct
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Protocol, Sequence

import numpy as np

from .domain import QAPair, normalize_text


class EmbeddingError(Exception):
    pass


class DimensionMismatch(EmbeddingError):
    pass


class ModelMismatch(EmbeddingError):
    pass


class EmptyText(EmbeddingError):
    pass


# Above this dimension, dot products and norms switch to compensated summation
# so clustering decisions near the eps boundary stay stable.
_FSUM_DIMENSION = 1024


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]
    model_id: str

    def __post_init__(self) -> None:
        if not self.values:
            raise EmbeddingError("empty embedding vector")
        if all(v == 0.0 for v in self.values):
            raise EmbeddingError("all-zero embedding vector rejected")

    @property
    def dimension(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class EmbeddedQAPair:
    pair: QAPair
    question_embedding: EmbeddingVector


def _check_comparable(u: EmbeddingVector, v: EmbeddingVector) -> None:
    if u.dimension != v.dimension:
        raise DimensionMismatch(f"dimensions {u.dimension} != {v.dimension}")
    if u.model_id != v.model_id:
        raise ModelMismatch(f"model ids {u.model_id!r} != {v.model_id!r}")


def _dot(a: Sequence[float], b: Sequence[float]) -> float:
    if len(a) > _FSUM_DIMENSION:
        return math.fsum(x * y for x, y in zip(a, b))
    return float(np.dot(a, b))


def cosine_distance(u: EmbeddingVector, v: EmbeddingVector) -> float:
    """Cosine distance between two comparable vectors, clamped to [0, 2]."""
    _check_comparable(u, v)
    uv = _dot(u.values, v.values)
    uu = _dot(u.values, u.values)
    vv = _dot(v.values, v.values)
    d = 1.0 - uv / math.sqrt(uu * vv)
    return min(max(d, 0.0), 2.0)


def cosine_similarity(u: EmbeddingVector, v: EmbeddingVector) -> float:
    return 1.0 - cosine_distance(u, v)


def pairwise_distances(points: Sequence[EmbeddingVector]) -> np.ndarray:
    """Symmetric n x n cosine-distance matrix with an exactly zero diagonal.

    Each unordered pair is computed once with the same kernel cosine_distance
    uses, so entries match element-wise recomputation exactly.
    """
    if not points:
        raise EmbeddingError("pairwise_distances needs at least one point")
    first = points[0]
    for p in points[1:]:
        _check_comparable(first, p)
    n = len(points)
    out = np.zeros((n, n), dtype=np.float64)
    for i in range(n):
        for j in range(i + 1, n):
            d = cosine_distance(points[i], points[j])
            out[i, j] = d
            out[j, i] = d
    return out


class EmbeddingProvider(Protocol):
    model_id: str

    def embed(self, text: str) -> EmbeddingVector: ...


class HashedTrigramProvider:
    """Deterministic offline embeddings from seeded character-trigram hashing.

    Text is lowercased and whitespace-normalized, padded with one space on each
    end, and every character trigram is hashed into one of `dimension` signed
    buckets. The bucket histogram is L2-normalized. Identical text always maps
    to an identical vector, across runs and processes.
    """

    def __init__(self, dimension: int = 256, seed: int = 7, model_id: Optional[str] = None):
        if dimension < 2:
            raise EmbeddingError("dimension must be >= 2")
        self.dimension = dimension
        self.seed = seed
        self.model_id = model_id or f"hashed-trigram-{dimension}-s{seed}"
        self._seed_bytes = str(seed).encode("utf-8")

    def embed(self, text: str) -> EmbeddingVector:
        normalized = normalize_text(text).lower()
        if not normalized:
            raise EmptyText("cannot embed empty text")
        padded = f" {normalized} "
        buckets = np.zeros(self.dimension, dtype=np.float64)
        for i in range(len(padded) - 2):
            trigram = padded[i : i + 3]
            digest = hashlib.blake2s(
                self._seed_bytes + trigram.encode("utf-8"), digest_size=8
            ).digest()
            idx = int.from_bytes(digest[:4], "little") % self.dimension
            sign = 1.0 if digest[4] & 1 else -1.0
            buckets[idx] += sign
        norm = float(np.linalg.norm(buckets))
        if norm == 0.0:
            # A pathological text whose signed buckets cancel; pin one bucket so
            # the zero-vector invariant holds.
            buckets[0] = 1.0
            norm = 1.0
        return EmbeddingVector(values=tuple(buckets / norm), model_id=self.model_id)


_CACHE_MAGIC = b"KBEMB"
_CACHE_VERSION = 1


class EmbeddingCache:
    """Memoizes embed() by (model_id, exact text), spilling to a binary file.

    File layout: 5-byte magic, uint16 version, then records of
    uint16 model-id length, model-id bytes, 32-byte SHA-256 of the text,
    uint32 dimension, dimension float64 values (little-endian throughout).
    Single writer, any number of readers.
    """

    def __init__(self, provider: EmbeddingProvider, path: Optional[str | Path] = None):
        self.provider = provider
        self.path = Path(path) if path is not None else None
        self._mem: dict[tuple[str, bytes], EmbeddingVector] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            self._load()

    @property
    def model_id(self) -> str:
        return self.provider.model_id

    @staticmethod
    def _text_key(text: str) -> bytes:
        return hashlib.sha256(text.encode("utf-8")).digest()

    def embed(self, text: str) -> EmbeddingVector:
        key = (self.provider.model_id, self._text_key(text))
        with self._lock:
            hit = self._mem.get(key)
        if hit is not None:
            return hit
        vector = self.provider.embed(text)
        with self._lock:
            self._mem[key] = vector
            if self.path is not None:
                self._append(vector, key[1])
        return vector

    def _append(self, vector: EmbeddingVector, text_digest: bytes) -> None:
        new_file = not self.path.exists()
        with open(self.path, "ab") as fh:
            if new_file:
                fh.write(_CACHE_MAGIC + struct.pack("<H", _CACHE_VERSION))
            model = vector.model_id.encode("utf-8")
            fh.write(struct.pack("<H", len(model)))
            fh.write(model)
            fh.write(text_digest)
            fh.write(struct.pack("<I", vector.dimension))
            fh.write(struct.pack(f"<{vector.dimension}d", *vector.values))

    def _load(self) -> None:
        data = self.path.read_bytes()
        if len(data) < 7 or data[:5] != _CACHE_MAGIC:
            raise EmbeddingError(f"{self.path}: not an embedding cache file")
        (version,) = struct.unpack_from("<H", data, 5)
        if version != _CACHE_VERSION:
            raise EmbeddingError(f"{self.path}: unsupported cache version {version}")
        pos = 7
        while pos < len(data):
            (mlen,) = struct.unpack_from("<H", data, pos)
            pos += 2
            model = data[pos : pos + mlen].decode("utf-8")
            pos += mlen
            digest = data[pos : pos + 32]
            pos += 32
            (dim,) = struct.unpack_from("<I", data, pos)
            pos += 4
            values = struct.unpack_from(f"<{dim}d", data, pos)
            pos += 8 * dim
            self._mem[(model, digest)] = EmbeddingVector(values=values, model_id=model)


def embed_pairs(pairs: Sequence[QAPair], provider: EmbeddingProvider) -> list[EmbeddedQAPair]:
    """Embed every pair's question text."""
    return [
        EmbeddedQAPair(pair=p, question_embedding=provider.embed(p.question)) for p in pairs
    ]
