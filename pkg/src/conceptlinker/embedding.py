"""Text-to-vector providers behind one interface.

Two providers: a remote JSON-over-HTTP embedding endpoint (responses cached
on disk so repeat calls are free and identical), and a deterministic local
character-trigram embedder so every pipeline stage runs offline.

All vectors leave this module unit-normalized as float32 arrays; similarity
downstream is plain cosine on those.
"""

from __future__ import annotations

import hashlib
import logging
import os
import struct
import tempfile
import threading
import time
from dataclasses import dataclass

import numpy as np
import requests

from .errors import (
    CacheError,
    DimMismatch,
    EmptyText,
    TransportError,
)
from .errors import Timeout as TimeoutError_
from .textutil import normalize_whitespace

logger = logging.getLogger(__name__)

LOCAL_PROVIDER_ID = "local-trigram"
REMOTE_PROVIDER_ID = "remote"
API_KEY_ENV = "LINKER_API_KEY"

# FNV-1a 64-bit parameters
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF

# cache entry: 16-byte header (magic, dim u32 LE, 8 reserved), then float32 LE body
CACHE_MAGIC = b"LFV1"
_CACHE_HEADER = struct.Struct("<4sI8x")

RETRY_ATTEMPTS = 3
RETRY_BACKOFF_S = (1.0, 2.0, 4.0)


def bearer_token() -> str | None:
    """API key from the environment; the only place credentials come from."""
    return os.environ.get(API_KEY_ENV) or None


@dataclass(frozen=True)
class ProviderSpec:
    """Identifies one embedding provider + model and its vector dimension."""

    provider_id: str
    model_id: str
    dim: int
    endpoint: str | None = None
    timeout: float = 30.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.dim <= 0:
            raise ValueError(f"dim must be positive, got {self.dim}")
        if self.provider_id == REMOTE_PROVIDER_ID and not self.endpoint:
            raise ValueError("remote provider requires an endpoint URL")
        if self.provider_id != REMOTE_PROVIDER_ID and self.endpoint:
            raise ValueError(f"provider {self.provider_id!r} does not take an endpoint")

    @property
    def fingerprint(self) -> tuple[str, str]:
        return (self.provider_id, self.model_id)


def _fnv1a64(data: bytes, seed: int = 0) -> int:
    """Fixed 64-bit FNV-1a; a nonzero seed perturbs the initial state."""
    h = (_FNV_OFFSET ^ (seed & _MASK64)) & _MASK64
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def trigrams(text: str) -> list[str]:
    """Character trigrams of ``text`` padded with one space on each side."""
    padded = f" {text} "
    return [padded[i : i + 3] for i in range(len(padded) - 2)]


def local_embed(text: str, dim: int, seed: int = 0) -> np.ndarray:
    """Deterministic trigram-hash embedding: unit-norm float32 of length ``dim``.

    Lowercases the normalized text, hashes each character trigram of the
    space-padded string with 64-bit FNV-1a, buckets by ``hash % dim``,
    accumulates counts and L2-normalizes. Non-empty text always yields at
    least one trigram, so the vector is never zero.
    """
    if dim < 16:
        raise ValueError(f"local embedder needs dim >= 16, got {dim}")
    text = normalize_whitespace(text)
    if not text:
        raise EmptyText()
    counts = np.zeros(dim, dtype=np.float64)
    for gram in trigrams(text.lower()):
        counts[_fnv1a64(gram.encode("utf-8"), seed) % dim] += 1.0
    counts /= np.linalg.norm(counts)
    return counts.astype(np.float32)


class VectorCache:
    """One file per SHA-256 key; concurrent readers, serialized atomic writers."""

    def __init__(self, root: str | os.PathLike):
        self.root = str(root)
        os.makedirs(self.root, exist_ok=True)
        self._write_lock = threading.Lock()

    @staticmethod
    def key(provider_id: str, model_id: str, normalized_text: str) -> str:
        payload = "\x1f".join((provider_id, model_id, normalized_text))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def _path(self, key: str) -> str:
        return os.path.join(self.root, key)

    def get(self, key: str) -> np.ndarray | None:
        path = self._path(key)
        try:
            with open(path, "rb") as fh:
                blob = fh.read()
        except FileNotFoundError:
            return None
        if len(blob) < _CACHE_HEADER.size:
            raise CacheError(f"cache entry {key} is truncated")
        magic, dim = _CACHE_HEADER.unpack_from(blob)
        if magic != CACHE_MAGIC:
            raise CacheError(f"cache entry {key} has bad magic {magic!r}")
        body = blob[_CACHE_HEADER.size :]
        if len(body) != 4 * dim:
            raise CacheError(f"cache entry {key} body does not match dim {dim}")
        return np.frombuffer(body, dtype="<f4").astype(np.float32)

    def put(self, key: str, vector: np.ndarray) -> None:
        blob = _CACHE_HEADER.pack(CACHE_MAGIC, vector.shape[0])
        blob += np.asarray(vector, dtype="<f4").tobytes()
        with self._write_lock:
            fd, tmp = tempfile.mkstemp(dir=self.root, prefix=".tmp-")
            try:
                with os.fdopen(fd, "wb") as fh:
                    fh.write(blob)
                os.replace(tmp, self._path(key))
            except BaseException:
                if os.path.exists(tmp):
                    os.unlink(tmp)
                raise


class LocalTrigramProvider:
    """Offline deterministic provider; a pure function, so nothing is cached."""

    def __init__(self, spec: ProviderSpec):
        if spec.provider_id != LOCAL_PROVIDER_ID:
            raise ValueError(f"not a local spec: {spec.provider_id!r}")
        self.spec = spec

    def embed_batch(self, texts: list[str]) -> list[np.ndarray]:
        cleaned = _clean_texts(texts)
        return [local_embed(t, self.spec.dim, self.spec.seed) for t in cleaned]


class RemoteProvider:
    """Generic JSON-over-HTTP embedding client with retry and a disk cache.

    Request body is ``{"model": ..., "input": [...]}``; the response carries
    ``{"data": [{"embedding": [...]}, ...]}`` in input order. The bearer
    token comes from the LINKER_API_KEY environment variable.
    """

    def __init__(self, spec: ProviderSpec, cache: VectorCache | None = None,
                 session: requests.Session | None = None):
        if spec.provider_id != REMOTE_PROVIDER_ID:
            raise ValueError(f"not a remote spec: {spec.provider_id!r}")
        self.spec = spec
        self.cache = cache
        self.session = session or requests.Session()

    def embed_batch(self, texts: list[str]) -> list[np.ndarray]:
        cleaned = _clean_texts(texts)
        out: list[np.ndarray | None] = [None] * len(cleaned)
        misses: list[int] = []
        for i, text in enumerate(cleaned):
            if self.cache is not None:
                key = VectorCache.key(self.spec.provider_id, self.spec.model_id, text)
                hit = self.cache.get(key)
                if hit is not None:
                    out[i] = hit
                    continue
            misses.append(i)

        if misses:
            fetched = self._post([cleaned[i] for i in misses])
            if len(fetched) != len(misses):
                raise TransportError(
                    None, f"endpoint returned {len(fetched)} embeddings for {len(misses)} inputs"
                )
            # validate the whole reply before any cache write: a batch is atomic
            for j, vec in zip(misses, fetched):
                if len(vec) != self.spec.dim:
                    raise DimMismatch(self.spec.dim, len(vec), index=j)
            for j, vec in zip(misses, fetched):
                unit = _unit(np.asarray(vec, dtype=np.float64))
                out[j] = unit
                if self.cache is not None:
                    key = VectorCache.key(
                        self.spec.provider_id, self.spec.model_id, cleaned[j]
                    )
                    self.cache.put(key, unit)
        return [v for v in out if v is not None]

    def _post(self, inputs: list[str]) -> list[list[float]]:
        headers = {}
        api_key = bearer_token()
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        body = {"model": self.spec.model_id, "input": inputs}

        last: Exception | None = None
        for attempt in range(RETRY_ATTEMPTS):
            if attempt:
                time.sleep(RETRY_BACKOFF_S[attempt - 1])
            try:
                resp = self.session.post(
                    self.spec.endpoint, json=body, headers=headers,
                    timeout=self.spec.timeout,
                )
            except requests.Timeout as exc:
                last = TimeoutError_(str(exc))
                continue
            except requests.RequestException as exc:
                last = TransportError(None, str(exc))
                continue
            if resp.status_code >= 500:
                last = TransportError(resp.status_code, resp.text[:200])
                continue
            if resp.status_code >= 400:
                raise TransportError(resp.status_code, resp.text[:200])
            try:
                data = resp.json()["data"]
                return [row["embedding"] for row in data]
            except (KeyError, TypeError, ValueError) as exc:
                raise TransportError(resp.status_code, f"malformed reply: {exc}") from None
        assert last is not None
        raise last


def _clean_texts(texts: list[str]) -> list[str]:
    cleaned = []
    for i, text in enumerate(texts):
        norm = normalize_whitespace(text)
        if not norm:
            raise EmptyText(index=i)
        cleaned.append(norm)
    return cleaned


def _unit(vec: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(vec)
    if norm == 0.0:
        raise ValueError("embedding endpoint returned a zero vector")
    return (vec / norm).astype(np.float32)


Provider = LocalTrigramProvider | RemoteProvider


def make_provider(spec: ProviderSpec, cache_dir: str | os.PathLike | None = None,
                  session: requests.Session | None = None) -> Provider:
    """Instantiate the provider named by ``spec``."""
    if spec.provider_id == LOCAL_PROVIDER_ID:
        return LocalTrigramProvider(spec)
    if spec.provider_id == REMOTE_PROVIDER_ID:
        cache = VectorCache(cache_dir) if cache_dir is not None else None
        return RemoteProvider(spec, cache=cache, session=session)
    raise ValueError(f"unknown provider id {spec.provider_id!r}")


def embed_text(provider: Provider, text: str) -> np.ndarray:
    """Embed one text; unit-norm float32 of the provider's dimension."""
    return provider.embed_batch([text])[0]


def embed_batch(provider: Provider, texts: list[str]) -> list[np.ndarray]:
    """Embed many texts; order preserved, all-or-nothing on failure."""
    return provider.embed_batch(texts)
