"""Append-only on-disk cache for masked-position distributions.

Evaluations re-query identical contexts constantly (the single-mask base
distribution of a word is reused against every paired mask), so cached
vectors are stored exactly as decoded (float64) and replayed bit for bit:
a warm cache must be indistinguishable from the live gateway.

File layout: the 8-byte magic, then records of
  key digest (16 bytes) | payload length (u32 BE) | float64 LE vector
Keys digest (namespace, token_ids, masked_positions, position). Readers
may share the store; writes are serialized by a process-local lock and a
single append per record, and a torn trailing record is ignored on load.
"""

from __future__ import annotations

import struct
import threading
from hashlib import blake2b
from pathlib import Path
from typing import Sequence

import numpy as np

from .types import (DistributionRequest, DistributionResponse, GatewayBase,
                    ModelInfo)

_MAGIC = b"CXNCACH1"
_HEAD = struct.Struct(">16sI")


def _digest(namespace: str, token_ids: Sequence[int],
            masked: Sequence[int], position: int) -> bytes:
    h = blake2b(digest_size=16)
    h.update(namespace.encode("utf-8"))
    h.update(struct.pack("<I", len(token_ids)))
    h.update(np.asarray(token_ids, dtype="<u4").tobytes())
    h.update(struct.pack("<I", len(masked)))
    h.update(np.asarray(sorted(masked), dtype="<u4").tobytes())
    h.update(struct.pack("<I", position))
    return h.digest()


class DistributionCache:
    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._index: dict[bytes, np.ndarray] = {}
        if self.path.exists():
            self._load()
        else:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_bytes(_MAGIC)
        self._file = open(self.path, "ab")

    def _load(self) -> None:
        blob = self.path.read_bytes()
        if blob[:8] != _MAGIC:
            raise ValueError(f"{self.path} is not a distribution cache")
        offset = 8
        while offset + _HEAD.size <= len(blob):
            key, size = _HEAD.unpack_from(blob, offset)
            if offset + _HEAD.size + size > len(blob):
                break  # torn final record from an interrupted writer
            start = offset + _HEAD.size
            vec = np.frombuffer(blob[start:start + size], dtype="<f8").copy()
            self._index[key] = vec
            offset = start + size

    def get(self, key: bytes) -> np.ndarray | None:
        vec = self._index.get(key)
        return None if vec is None else vec.copy()

    def put(self, key: bytes, vec: np.ndarray) -> None:
        data = np.asarray(vec, dtype="<f8").tobytes()
        with self._lock:
            if key in self._index:
                return
            self._index[key] = np.frombuffer(data, dtype="<f8")
            self._file.write(_HEAD.pack(key, len(data)) + data)
            self._file.flush()

    def __len__(self) -> int:
        return len(self._index)

    def close(self) -> None:
        self._file.close()


class CachingGateway(GatewayBase):
    """Wraps a gateway; distribution queries hit the cache first.

    A multi-position request is served from cache only when every
    requested position is present (the vectors depend on the whole mask
    set, which the key encodes).
    """

    def __init__(self, inner: GatewayBase, cache: DistributionCache):
        self.inner = inner
        self.cache = cache
        self.miss_calls = 0  # live gateway calls, for resumability checks
        self._namespace = inner.cache_namespace()

    def handshake(self) -> ModelInfo:
        return self.inner.handshake()

    def cache_namespace(self) -> str:
        return self._namespace

    def tokenize(self, text: str):
        return self.inner.tokenize(text)

    def pos_tag(self, text: str):
        return self.inner.pos_tag(text)

    def tag_fills(self, text, slot, fills, want_tags=True):
        return self.inner.tag_fills(text, slot, fills, want_tags)

    def close(self) -> None:
        self.inner.close()

    def _keys(self, request: DistributionRequest) -> dict[int, bytes]:
        return {p: _digest(self._namespace, request.token_ids,
                           request.masked_positions, p)
                for p in request.masked_positions}

    def distributions(self, request: DistributionRequest) -> DistributionResponse:
        keys = self._keys(request)
        cached = {p: self.cache.get(k) for p, k in keys.items()}
        if all(v is not None for v in cached.values()):
            return DistributionResponse(request_id=request.request_id,
                                        per_position=cached)
        self.miss_calls += 1
        response = self.inner.distributions(request)
        for p, vec in response.per_position.items():
            self.cache.put(keys[p], vec)
        return response

    def distributions_many(self, requests: Sequence[DistributionRequest]) -> list[DistributionResponse]:
        out: list[DistributionResponse | None] = [None] * len(requests)
        misses: list[int] = []
        for idx, request in enumerate(requests):
            keys = self._keys(request)
            cached = {p: self.cache.get(k) for p, k in keys.items()}
            if all(v is not None for v in cached.values()):
                out[idx] = DistributionResponse(request_id=request.request_id,
                                                per_position=cached)
            else:
                misses.append(idx)
        if misses:
            self.miss_calls += len(misses)
            fetched = self.inner.distributions_many([requests[i] for i in misses])
            for idx, response in zip(misses, fetched):
                keys = self._keys(requests[idx])
                for p, vec in response.per_position.items():
                    self.cache.put(keys[p], vec)
                out[idx] = response
        return [r for r in out if r is not None]
