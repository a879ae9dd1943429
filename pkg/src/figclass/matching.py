"""Cosine-similarity matching of free text to concepts, with caching."""
from __future__ import annotations

import json
import threading
from typing import Sequence

import numpy as np

from .backend import Backend
from .errors import ConceptNotInSet, DimensionMismatch, ZeroVector
from .taxonomy import Concept, ConceptSet


def cosine(u: Sequence[float], v: Sequence[float]) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise DimensionMismatch(f"{u.shape} vs {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ZeroVector("cosine undefined for zero vectors")
    return float(np.dot(u, v) / (nu * nv))


class EmbeddingCache:
    """Content-addressed vector cache keyed by (backend identity, text).

    Persists as JSONL of {"backend_id", "text", "vector"} so evaluation
    reruns do not re-call the embedding endpoint.
    """

    def __init__(self):
        self._store: dict[tuple[str, str], np.ndarray] = {}
        self._lock = threading.Lock()

    def get(self, backend_id: str, text: str) -> np.ndarray | None:
        with self._lock:
            return self._store.get((backend_id, text))

    def put(self, backend_id: str, text: str, vector: Sequence[float]) -> None:
        with self._lock:
            self._store[(backend_id, text)] = np.asarray(vector, dtype=float)

    def __len__(self) -> int:
        return len(self._store)

    def save(self, path) -> None:
        with self._lock, open(path, "w", encoding="utf-8") as f:
            for (bid, text), vec in self._store.items():
                f.write(json.dumps({"backend_id": bid, "text": text, "vector": vec.tolist()}) + "\n")

    @classmethod
    def load(cls, path) -> "EmbeddingCache":
        cache = cls()
        with open(path, encoding="utf-8") as f:
            for line in f:
                if line.strip():
                    rec = json.loads(line)
                    cache.put(rec["backend_id"], rec["text"], rec["vector"])
        return cache


class ConceptMatcher:
    """Maps response text to the nearest concept by embedding cosine."""

    def __init__(self, backend: Backend, cache: EmbeddingCache | None = None):
        self.backend = backend
        self.cache = cache or EmbeddingCache()
        self.embedding_calls = 0

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        bid = self.backend.backend_id
        missing = [t for t in dict.fromkeys(texts) if self.cache.get(bid, t) is None]
        if missing:
            vectors = self.backend.embed(missing)
            self.embedding_calls += 1
            for text, vec in zip(missing, vectors):
                self.cache.put(bid, text, vec)
        return np.stack([self.cache.get(bid, t) for t in texts])

    def nearest_concept(self, text: str, concepts: ConceptSet) -> tuple[Concept, float]:
        """Argmax of cosine over the set; ties break by canonical order."""
        query = self.embed([text.strip()])[0]
        labels = concepts.labels()
        matrix = self.embed(labels)
        sims = _cosine_to_rows(query, matrix)
        idx = int(np.argmax(sims))
        return concepts.concepts[idx], float(sims[idx])

    def similar_pool(self, concept: Concept, concepts: ConceptSet, size: int = 100) -> list[Concept]:
        """The ``size`` concepts most similar to ``concept``, descending;
        returns all others when the set is smaller."""
        if concept.id not in concepts:
            raise ConceptNotInSet(concept.id)
        others = [c for c in concepts if c.id != concept.id]
        anchor = self.embed([concept.label])[0]
        matrix = self.embed([c.label for c in others])
        sims = _cosine_to_rows(anchor, matrix)
        order = np.argsort(-sims, kind="stable")
        return [others[i] for i in order[:size]]


def _cosine_to_rows(query: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    qn = np.linalg.norm(query)
    norms = np.linalg.norm(matrix, axis=1)
    if qn == 0 or (norms == 0).any():
        raise ZeroVector("cosine undefined for zero vectors")
    return (matrix @ query) / (norms * qn)
