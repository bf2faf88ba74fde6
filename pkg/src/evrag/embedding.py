"""Text embeddings: remote HTTP provider plus a deterministic local one.

Vectors are plain float32 numpy arrays, unit-normalized client-side so
the index can treat dot product as cosine similarity. The deterministic
embedder hashes character trigrams into a signed bag, which is enough
for offline tests to get meaningful similarity orderings without a
hosted model.
"""
from __future__ import annotations

import hashlib
import logging
import os
import time
from dataclasses import dataclass

import numpy as np
import requests

from .errors import DimensionMismatch, EmptyText, ProviderUnavailable, ZeroVector

log = logging.getLogger(__name__)

DIM = 1024

_HASH_SEED = 0x7A5C3D


@dataclass
class EmbedderConfig:
    provider: str = "deterministic_local"  # or "remote_http"
    endpoint: str = ""
    model_name: str = ""
    api_key: str = ""
    dim: int = DIM
    timeout_ms: int = 30_000
    batch_size: int = 32
    retries: int = 3
    backoff_s: float = 0.25

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    @classmethod
    def from_env(cls, dim: int = DIM) -> "EmbedderConfig":
        endpoint = os.environ.get("EMBED_ENDPOINT", "")
        if not endpoint:
            return cls(provider="deterministic_local", dim=dim)
        return cls(
            provider="remote_http",
            endpoint=endpoint,
            model_name=os.environ.get("EMBED_MODEL", ""),
            api_key=os.environ.get("EMBED_API_KEY", ""),
            dim=dim,
        )


def unit_normalize(vec: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        raise ZeroVector("cannot normalize a zero vector")
    return (vec / norm).astype(np.float32)


def _trigrams(text: str) -> list[str]:
    text = text.lower()
    if len(text) < 3:
        return [text]
    return [text[i:i + 3] for i in range(len(text) - 2)]


def deterministic_embed(text: str, dim: int = DIM) -> np.ndarray:
    """Hashed signed character-trigram bag, unit-normalized.

    Stable across processes and platforms (keyed blake2b, no PYTHONHASHSEED
    dependence). Texts sharing trigrams land on shared coordinates, so
    near-duplicates score high cosine similarity.
    """
    if not text or not text.strip():
        raise EmptyText("cannot embed empty text")
    acc = np.zeros(dim, dtype=np.float64)
    key = _HASH_SEED.to_bytes(8, "little")
    for gram in _trigrams(text):
        digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=8, key=key).digest()
        h = int.from_bytes(digest, "little")
        idx = (h >> 1) % dim
        sign = 1.0 if h & 1 == 0 else -1.0
        acc[idx] += sign
    return unit_normalize(acc)


class _RemoteSession:
    """Thin wrapper so tests can inject a canned HTTP post."""

    def __init__(self, post=None):
        self._post = post or requests.post

    def post(self, url, **kwargs):
        return self._post(url, **kwargs)


def _remote_batch(texts: list[str], cfg: EmbedderConfig, session: _RemoteSession) -> list[np.ndarray]:
    headers = {"Content-Type": "application/json"}
    if cfg.api_key:
        headers["Authorization"] = f"Bearer {cfg.api_key}"
    payload = {"model": cfg.model_name, "input": texts}
    last_exc: Exception | None = None
    for attempt in range(cfg.retries):
        try:
            resp = session.post(
                cfg.endpoint,
                json=payload,
                headers=headers,
                timeout=cfg.timeout_ms / 1000.0,
            )
            if resp.status_code != 200:
                raise ProviderUnavailable(
                    f"embedding endpoint returned HTTP {resp.status_code}"
                )
            data = resp.json()["data"]
            break
        except ProviderUnavailable as exc:
            last_exc = exc
        except Exception as exc:  # network / decode failures
            last_exc = exc
        if attempt < cfg.retries - 1:
            time.sleep(cfg.backoff_s * (2 ** attempt))
    else:
        raise ProviderUnavailable(f"embedding provider failed: {last_exc}") from last_exc

    vectors = []
    for entry in data:
        vec = np.asarray(entry["embedding"], dtype=np.float32)
        if vec.shape != (cfg.dim,):
            raise DimensionMismatch(
                f"provider returned dim {vec.shape}, expected ({cfg.dim},)"
            )
        vectors.append(unit_normalize(vec))
    if len(vectors) != len(texts):
        raise ProviderUnavailable(
            f"provider returned {len(vectors)} embeddings for {len(texts)} inputs"
        )
    return vectors


def embed_texts(texts: list[str], cfg: EmbedderConfig,
                session: _RemoteSession | None = None) -> list[np.ndarray]:
    """One unit-normalized embedding per input, order preserved."""
    if not texts:
        raise EmptyText("no texts to embed")
    for text in texts:
        if not text or not text.strip():
            raise EmptyText("cannot embed empty text")

    if cfg.provider == "deterministic_local":
        return [deterministic_embed(t, cfg.dim) for t in texts]
    if cfg.provider != "remote_http":
        raise ValueError(f"unknown provider: {cfg.provider!r}")

    session = session or _RemoteSession()
    out: list[np.ndarray] = []
    for start in range(0, len(texts), cfg.batch_size):
        out.extend(_remote_batch(texts[start:start + cfg.batch_size], cfg, session))
    return out


def make_embedder(cfg: EmbedderConfig, session: _RemoteSession | None = None):
    """Returns a `text -> vector` callable bound to the config."""
    def embed_one(text: str) -> np.ndarray:
        return embed_texts([text], cfg, session=session)[0]
    return embed_one


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """(a.b)/(|a||b|), clamped into [-1, 1] against float rounding."""
    a = np.asarray(a, dtype=np.float32)
    b = np.asarray(b, dtype=np.float32)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes {a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("cosine similarity undefined for zero vectors")
    return float(np.clip(float(np.dot(a, b)) / (na * nb), -1.0, 1.0))
