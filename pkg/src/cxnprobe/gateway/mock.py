"""Deterministic in-process gateway used by the offline test suite.

The mock has a 64-entry vocabulary (id 0 is the mask token, ids 1-63 the
words in VOCAB_WORDS) and tokenizes on whitespace: one token per chunk,
offsets covering the chunk. Chunks matching a vocabulary word (exact,
then casefolded) get that word's id; anything else hashes into 1..63.

Pseudo-distribution formula (normative; independent reimplementations
must reproduce it bit for bit):

  message(v) = b"cxnprobe-mock-v1"
             + seed              as u64 little-endian
             + len(token_ids)    as u32 LE, then each token id as u32 LE
             + len(masked)       as u32 LE, then each position as u32 LE
             + p                 as u32 LE   (the queried token position)
             + v                 as u32 LE   (the vocabulary entry)
  score(v)   = (blake2b_64(message(v)) / 2**64) * 8.0
               with blake2b_64 = 8-byte blake2b digest read little-endian
  log_probs  = scores - (m + log(sum(exp(scores - m)))),  m = max(scores)

computed in float64 throughout (numpy elementwise ops and np.sum). Every
input feeds the hash, so masking one more position changes every other
position's distribution, which is what the local-affinity tests need.
"""

from __future__ import annotations

import struct
from hashlib import blake2b
from typing import Sequence

import numpy as np

from ..core import Token, strip_edge_punct, word_chunks
from ..errors import EncodingError, LengthError
from ..tagging import rule_tag
from .types import (DistributionRequest, DistributionResponse, FillTag,
                    GatewayBase, ModelInfo)

VOCAB_WORDS = (
    "a", "b", "the", "day", "by", "after", "upon", "to", "over", "week",
    "year", "book", "face", "night",
    "so", "that", "it", "was", "is", "and", "of", "in", "on", "at",
    "with", "way", "much", "less", "let", "alone",
    "more", "better", "worse", "merrier", "bigger", "faster", "stronger",
    "happier", "smaller", "older",
    "good", "bad", "big", "small", "fast", "slow", "hot", "cold", "old",
    "new", "dog", "cat", "road", "sun",
    "rain", "tree", "bird", "fish", "man", "time", "hand", "word", "work",
)

MASK_TOKEN = "<mask>"
VOCAB = (MASK_TOKEN,) + VOCAB_WORDS
VOCAB_SIZE = len(VOCAB)  # 64
MAX_POSITIONS = 128

_MAGIC = b"cxnprobe-mock-v1"
_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")


def _hash64(message: bytes) -> int:
    return int.from_bytes(blake2b(message, digest_size=8).digest(), "little")


class MockGateway(GatewayBase):
    """Pure function of (seed, inputs); see the module docstring."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self._word_to_id = {w: i for i, w in enumerate(VOCAB)}
        self._info = ModelInfo(
            model_name="mock",
            vocab_size=VOCAB_SIZE,
            mask_token_id=0,
            max_positions=MAX_POSITIONS,
        )

    def handshake(self) -> ModelInfo:
        return self._info

    def cache_namespace(self) -> str:
        return f"mock:seed={self.seed}"

    def tokenize(self, text: str) -> list[Token]:
        if not text:
            raise EncodingError("empty text")
        tokens: list[Token] = []
        for start, end in word_chunks(text):
            chunk = text[start:end]
            token_id = self._word_to_id.get(chunk)
            if token_id is None:
                token_id = self._word_to_id.get(chunk.casefold())
            if token_id is None:
                token_id = 1 + _hash64(_MAGIC + b"tok" + _U64.pack(self.seed)
                                       + chunk.encode("utf-8")) % (VOCAB_SIZE - 1)
            tokens.append((token_id, start, end))
        if not tokens:
            raise EncodingError("no encodable content")
        return tokens

    def _scores(self, token_ids: Sequence[int], masked: Sequence[int],
                position: int) -> np.ndarray:
        prefix = bytearray(_MAGIC)
        prefix += _U64.pack(self.seed)
        prefix += _U32.pack(len(token_ids))
        for t in token_ids:
            prefix += _U32.pack(t)
        prefix += _U32.pack(len(masked))
        for m in masked:
            prefix += _U32.pack(m)
        prefix += _U32.pack(position)
        base = blake2b(bytes(prefix), digest_size=8)
        scores = np.empty(VOCAB_SIZE, dtype=np.float64)
        for v in range(VOCAB_SIZE):
            h = base.copy()
            h.update(_U32.pack(v))
            scores[v] = (int.from_bytes(h.digest(), "little") / 2.0**64) * 8.0
        return scores

    def distributions(self, request: DistributionRequest) -> DistributionResponse:
        if len(request.token_ids) > MAX_POSITIONS:
            raise LengthError(
                f"{len(request.token_ids)} tokens exceeds max_positions={MAX_POSITIONS}"
            )
        masked = tuple(sorted(request.masked_positions))
        per_position: dict[int, np.ndarray] = {}
        for p in request.masked_positions:
            scores = self._scores(request.token_ids, masked, p)
            m = np.max(scores)
            log_probs = scores - (m + np.log(np.sum(np.exp(scores - m))))
            per_position[p] = log_probs
        return DistributionResponse(request_id=request.request_id,
                                    per_position=per_position)

    def pos_tag(self, text: str) -> list[tuple[str, str]]:
        if not text:
            raise EncodingError("empty text")
        return [(text[s:e], rule_tag(strip_edge_punct(text[s:e])))
                for s, e in word_chunks(text)]

    def tag_fills(self, text: str, slot: tuple[int, int], fills: Sequence[int],
                  want_tags: bool = True) -> list[FillTag]:
        start, end = slot
        if not (0 <= start < end <= len(text)):
            raise ValueError(f"slot {slot} out of bounds")
        out: list[FillTag] = []
        for fill in fills:
            if not 0 <= fill < VOCAB_SIZE:
                raise ValueError(f"fill id {fill} out of vocabulary")
            surface = VOCAB[fill]
            tag = None
            if want_tags:
                substituted = text[:start] + surface + text[end:]
                tagged = self.pos_tag(substituted)
                # the fill starts where the slot did; find its chunk
                tag = "X"
                pos = 0
                for word, word_tag in tagged:
                    pos = substituted.index(word, pos)
                    if pos <= start < pos + len(word):
                        tag = word_tag
                        break
                    pos += len(word)
            out.append(FillTag(token_id=fill, surface=surface, tag=tag))
        return out
