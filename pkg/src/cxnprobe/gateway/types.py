"""Gateway-facing request/response types and the gateway interface."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..core import Token


@dataclass(frozen=True)
class ModelInfo:
    model_name: str
    vocab_size: int
    mask_token_id: int
    max_positions: int

    def __post_init__(self):
        if self.vocab_size <= 0:
            raise ValueError("vocab_size must be positive")
        if not 0 <= self.mask_token_id < self.vocab_size:
            raise ValueError("mask_token_id out of vocabulary")


@dataclass(frozen=True)
class DistributionRequest:
    request_id: str
    token_ids: tuple[int, ...]
    masked_positions: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "token_ids", tuple(self.token_ids))
        object.__setattr__(self, "masked_positions", tuple(self.masked_positions))
        n = len(self.token_ids)
        if len(set(self.masked_positions)) != len(self.masked_positions):
            raise ValueError("masked_positions must be distinct")
        for p in self.masked_positions:
            if not 0 <= p < n:
                raise ValueError(f"masked position {p} out of bounds for {n} tokens")


@dataclass(frozen=True)
class DistributionResponse:
    request_id: str
    per_position: dict[int, np.ndarray]  # token index -> full-vocab log-prob vector

    def at(self, position: int) -> np.ndarray:
        return self.per_position[position]


@dataclass(frozen=True)
class FillTag:
    """One candidate fill substituted into a sentence: its surface and tag."""

    token_id: int
    surface: str
    tag: Optional[str]  # None when tags were not requested


class GatewayBase:
    """Interface every gateway implementation provides.

    All methods are deterministic for a fixed peer: identical calls give
    identical results, which is what makes caching and batching invisible.
    """

    def handshake(self) -> ModelInfo:
        raise NotImplementedError

    def tokenize(self, text: str) -> list[Token]:
        raise NotImplementedError

    def distributions(self, request: DistributionRequest) -> DistributionResponse:
        raise NotImplementedError

    def distributions_many(self, requests: Sequence[DistributionRequest]) -> list[DistributionResponse]:
        """Batched form; responses in request order regardless of arrival order."""
        return [self.distributions(r) for r in requests]

    def pos_tag(self, text: str) -> list[tuple[str, str]]:
        raise NotImplementedError

    def tag_fills(self, text: str, slot: tuple[int, int], fills: Sequence[int],
                  want_tags: bool = True) -> list[FillTag]:
        """Substitute each fill token into text at slot, return surface (+tag)."""
        raise NotImplementedError

    def close(self) -> None:
        pass

    # identifies the model (plus any seed) for cache directories
    def cache_namespace(self) -> str:
        return self.handshake().model_name

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False
