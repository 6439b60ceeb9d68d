"""Persistence and acquisition of sentence embeddings.

The on-disk store is a flat little-endian binary format, append-friendly
and parseable from any language:

    magic  b"CISE"
    version  u16
    dim      u32
    model_id u32 length + UTF-8 bytes
    records, repeated to EOF:
        doc_id          u32 length + UTF-8 bytes
        sentence_index  u32
        vector          dim * f32

Vectors are stored and kept as float32 so a save/load cycle is
bit-exact. A missing embedding at scoring time is a hard error; nothing
here ever substitutes a zero vector.
"""

from __future__ import annotations

import os
import struct
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import requests

from .core import Document
from .errors import DataFormatError, ExternalServiceError, UsageError

__all__ = [
    "EmbeddingStore",
    "save_store",
    "load_store",
    "fetch_embeddings",
    "EMBED_API_KEY_ENV",
]

MAGIC = b"CISE"
VERSION = 1
EMBED_API_KEY_ENV = "CISE_EMBED_API_KEY"


@dataclass
class EmbeddingStore:
    """In-memory map from (doc_id, sentence_index) to a float32 vector."""

    dim: int
    model_id: str = ""
    entries: Dict[Tuple[str, int], np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.dim < 1:
            raise UsageError(f"store dim must be >= 1, got {self.dim}")

    def __len__(self) -> int:
        return len(self.entries)

    def add(self, doc_id: str, sentence_index: int, vector) -> None:
        vec = np.asarray(vector, dtype=np.float32)
        if vec.shape != (self.dim,):
            raise UsageError(
                f"vector for ({doc_id!r}, {sentence_index}) has shape {vec.shape}, "
                f"store dim is {self.dim}"
            )
        if not np.all(np.isfinite(vec)):
            raise UsageError(
                f"vector for ({doc_id!r}, {sentence_index}) has non-finite entries"
            )
        self.entries[(doc_id, int(sentence_index))] = vec

    def get(self, doc_id: str, sentence_index: int) -> np.ndarray:
        key = (doc_id, int(sentence_index))
        if key not in self.entries:
            raise UsageError(
                f"no embedding stored for document {doc_id!r} sentence {sentence_index}"
            )
        return self.entries[key]

    def vectors_for(self, doc: Document) -> np.ndarray:
        """The (p, dim) matrix for a document; every sentence must be present."""
        return np.stack([self.get(doc.id, i) for i in range(doc.p)])

    def provider(self):
        """Adapter usable as an EmbeddingScorer embedding provider."""
        return self.vectors_for


def save_store(store: EmbeddingStore, path) -> None:
    """Write the store; records are sorted by key for reproducible bytes."""
    tmp = str(path) + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<H", VERSION))
        fh.write(struct.pack("<I", store.dim))
        model = store.model_id.encode("utf-8")
        fh.write(struct.pack("<I", len(model)))
        fh.write(model)
        for (doc_id, idx), vec in sorted(store.entries.items()):
            doc = doc_id.encode("utf-8")
            fh.write(struct.pack("<I", len(doc)))
            fh.write(doc)
            fh.write(struct.pack("<I", idx))
            fh.write(vec.astype("<f4", copy=False).tobytes())
    os.replace(tmp, path)


class _Reader:
    """Tracks the byte offset so format errors can name it."""

    def __init__(self, fh):
        self.fh = fh
        self.offset = 0

    def take(self, n: int, what: str) -> bytes:
        data = self.fh.read(n)
        if len(data) != n:
            raise DataFormatError(
                f"truncated store: expected {n} bytes for {what} at byte "
                f"{self.offset}, got {len(data)}"
            )
        self.offset += n
        return data

    def u16(self, what: str) -> int:
        return struct.unpack("<H", self.take(2, what))[0]

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def string(self, what: str) -> str:
        length = self.u32(f"{what} length")
        raw = self.take(length, what)
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DataFormatError(
                f"invalid UTF-8 in {what} at byte {self.offset - length}: {exc}"
            ) from exc

    def at_eof(self) -> bool:
        probe = self.fh.read(1)
        if probe == b"":
            return True
        self.fh.seek(-1, os.SEEK_CUR)
        return False


def load_store(path) -> EmbeddingStore:
    """Read a store file back; bit-exact inverse of :func:`save_store`."""
    with open(path, "rb") as fh:
        reader = _Reader(fh)
        magic = reader.take(4, "magic")
        if magic != MAGIC:
            raise DataFormatError(
                f"bad magic at byte 0: expected {MAGIC!r}, got {magic!r}"
            )
        version = reader.u16("version")
        if version != VERSION:
            raise DataFormatError(
                f"unsupported store version {version} at byte 4 (expected {VERSION})"
            )
        dim = reader.u32("dim")
        if dim < 1:
            raise DataFormatError(f"store dim {dim} at byte 6 is invalid")
        model_id = reader.string("model_id")
        store = EmbeddingStore(dim=dim, model_id=model_id)
        vec_bytes = 4 * dim
        while not reader.at_eof():
            doc_id = reader.string("record doc_id")
            idx = reader.u32("record sentence_index")
            raw = reader.take(vec_bytes, f"vector for ({doc_id!r}, {idx})")
            vec = np.frombuffer(raw, dtype="<f4").copy()
            if not np.all(np.isfinite(vec)):
                raise DataFormatError(
                    f"non-finite vector for ({doc_id!r}, {idx}) ending at byte "
                    f"{reader.offset}"
                )
            store.entries[(doc_id, idx)] = vec
        return store


def _post_batch(
    session: requests.Session,
    endpoint_url: str,
    model_id: str,
    batch: Sequence[str],
    headers: dict,
    timeout: float,
    max_retries: int,
    backoff_base: float,
) -> List[np.ndarray]:
    last_exc: Optional[Exception] = None
    for attempt in range(max_retries + 1):
        if attempt:
            time.sleep(backoff_base * (2 ** (attempt - 1)))
        try:
            resp = session.post(
                endpoint_url,
                json={"model": model_id, "input": list(batch)},
                headers=headers,
                timeout=timeout,
            )
        except requests.RequestException as exc:
            last_exc = exc
            continue
        if resp.status_code in (401, 403):
            raise ExternalServiceError(
                f"embedding endpoint refused authentication (HTTP {resp.status_code})"
            )
        if resp.status_code >= 500 or resp.status_code == 429:
            last_exc = ExternalServiceError(
                f"embedding endpoint returned HTTP {resp.status_code}"
            )
            continue
        if resp.status_code != 200:
            raise ExternalServiceError(
                f"embedding endpoint returned HTTP {resp.status_code}: {resp.text[:200]}"
            )
        try:
            data = resp.json()["data"]
            vectors = [np.asarray(item["embedding"], dtype=np.float32) for item in data]
        except (KeyError, TypeError, ValueError) as exc:
            raise ExternalServiceError(
                f"malformed embedding response: {exc}"
            ) from exc
        if len(vectors) != len(batch):
            raise ExternalServiceError(
                f"embedding endpoint returned {len(vectors)} vectors for a batch of "
                f"{len(batch)}"
            )
        return vectors
    raise ExternalServiceError(
        f"embedding request failed after {max_retries} retries: {last_exc}"
    )


def fetch_embeddings(
    endpoint_url: str,
    model_id: str,
    sentences: Sequence[str],
    batch_size: int = 100,
    timeout: float = 30.0,
    max_retries: int = 3,
    backoff_base: float = 0.5,
    parallelism: int = 4,
    api_key: Optional[str] = None,
    session: Optional[requests.Session] = None,
) -> List[np.ndarray]:
    """Embed sentences over HTTP, order-preserving.

    Sentences are sent in batches of ``batch_size`` as
    ``{"model": ..., "input": [...]}`` and read back from
    ``{"data": [{"embedding": [...]}, ...]}``. Transient failures
    (connection errors, timeouts, 429/5xx) are retried with exponential
    backoff up to ``max_retries`` per batch; authentication failures and
    malformed payloads are not. Batches may be issued concurrently up to
    ``parallelism``; results come back in input order. If later batches
    disagree with the first on vector dimension, the whole fetch fails
    (no partial results escape).

    An empty sentence list returns immediately with zero requests. The
    API key defaults to the ``CISE_EMBED_API_KEY`` environment variable.
    """
    if batch_size < 1:
        raise UsageError(f"batch_size must be >= 1, got {batch_size}")
    if not sentences:
        return []
    key = api_key if api_key is not None else os.environ.get(EMBED_API_KEY_ENV)
    headers = {"Authorization": f"Bearer {key}"} if key else {}
    own_session = session is None
    sess = session or requests.Session()
    batches = [
        sentences[i : i + batch_size] for i in range(0, len(sentences), batch_size)
    ]
    try:
        if parallelism > 1 and len(batches) > 1:
            with ThreadPoolExecutor(max_workers=parallelism) as pool:
                results = list(
                    pool.map(
                        lambda b: _post_batch(
                            sess, endpoint_url, model_id, b, headers,
                            timeout, max_retries, backoff_base,
                        ),
                        batches,
                    )
                )
        else:
            results = [
                _post_batch(
                    sess, endpoint_url, model_id, b, headers,
                    timeout, max_retries, backoff_base,
                )
                for b in batches
            ]
    finally:
        if own_session:
            sess.close()

    vectors: List[np.ndarray] = []
    dim: Optional[int] = None
    for batch_vectors in results:
        for vec in batch_vectors:
            if vec.ndim != 1 or vec.size < 1:
                raise ExternalServiceError(
                    f"embedding endpoint returned a vector of shape {vec.shape}"
                )
            if dim is None:
                dim = vec.size
            elif vec.size != dim:
                raise ExternalServiceError(
                    f"embedding dimension drifted across batches: {dim} then {vec.size}"
                )
            vectors.append(vec)
    return vectors
