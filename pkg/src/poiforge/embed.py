"""Address embeddings: a hashed character-trigram reference embedder and a
JSON Lines store for vectors produced elsewhere (e.g. a trained language
model)."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .model import InputError


@lru_cache(maxsize=1 << 16)
def _slot(trigram: str, dim: int) -> tuple:
    raw = trigram.encode("utf-8")
    bucket = int.from_bytes(hashlib.blake2b(raw, digest_size=8, person=b"poi-bucket").digest(), "big") % dim
    sign_bit = hashlib.blake2b(raw, digest_size=1, person=b"poi-sign").digest()[0] & 1
    return bucket, 1.0 if sign_bit else -1.0


def token_trigrams(token: str) -> list:
    padded = f"<{token}>"
    if len(padded) <= 3:
        return [padded]
    return [padded[i:i + 3] for i in range(len(padded) - 2)]


def embed_text(text: str, dim: int = 300) -> np.ndarray:
    """Signed-hash bag of character trigrams, L2-normalised.

    Each whitespace token is wrapped in ``<`` ``>`` boundary markers before
    trigrams are taken, so spelling variants of a word share most of their
    trigrams. Empty text maps to the zero vector.
    """
    v = np.zeros(dim, dtype=float)
    for token in text.split():
        for tri in token_trigrams(token):
            bucket, sign = _slot(tri, dim)
            v[bucket] += sign
    norm = np.linalg.norm(v)
    return v / norm if norm > 0 else v


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


@dataclass
class EmbeddingStore:
    dim: int
    index: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.index)

    def __contains__(self, address_id):
        return address_id in self.index

    def __getitem__(self, address_id) -> np.ndarray:
        return self.index[address_id]

    def add(self, address_id: str, vector) -> None:
        v = np.asarray(vector, dtype=float)
        if v.shape != (self.dim,):
            raise InputError(f"embedding for {address_id!r} has length {v.size}, expected {self.dim}")
        if not np.all(np.isfinite(v)):
            raise InputError(f"embedding for {address_id!r} has non-finite entries")
        if address_id in self.index:
            raise InputError(f"duplicate address_id {address_id!r} in embeddings")
        self.index[address_id] = v

    @classmethod
    def from_texts(cls, texts: dict, dim: int = 300) -> "EmbeddingStore":
        store = cls(dim=dim)
        for aid in sorted(texts):
            store.add(aid, embed_text(texts[aid], dim))
        return store


def save_embeddings(store: EmbeddingStore, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"dim": store.dim}) + "\n")
        for aid in sorted(store.index):
            fh.write(json.dumps({"id": aid, "v": [float(x) for x in store.index[aid]]}) + "\n")


def load_embeddings(path, expected_dim: int) -> EmbeddingStore:
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise InputError(f"cannot read embeddings {path}: {exc}") from exc
    if not lines:
        raise InputError(f"{path}: empty embeddings file (missing {{\"dim\": N}} header)")
    try:
        header = json.loads(lines[0])
        dim = int(header["dim"])
    except (ValueError, KeyError, TypeError) as exc:
        raise InputError(f"{path}:1: malformed header, expected {{\"dim\": N}}") from exc
    if dim != expected_dim:
        raise InputError(f"{path}: dim {dim} does not match expected {expected_dim}")
    store = EmbeddingStore(dim=dim)
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            aid, vec = str(rec["id"]), rec["v"]
        except (ValueError, KeyError, TypeError) as exc:
            raise InputError(f"{path}:{lineno}: malformed record") from exc
        if not isinstance(vec, list):
            raise InputError(f"{path}:{lineno}: 'v' must be a list of floats")
        try:
            store.add(aid, vec)
        except (TypeError, ValueError) as exc:
            raise InputError(f"{path}:{lineno}: {exc}") from exc
    return store
