"""Global and local affinity on top of a gateway.

Global affinity of word i: the probability the model puts on the original
token at i when position i is masked, full bidirectional context visible.
Local affinity of (i, j): the base-2 Jensen-Shannon divergence between
position i's distribution with only i masked and with i and j masked
simultaneously; it measures how much j constrains i. Not symmetric, and
tests must not pretend otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import AnalyzedSentence, AffinityRecord, analyze, maskable
from .errors import SkippedWord
from .gateway.types import DistributionRequest, GatewayBase
from .stats import jsd


def analyze_with(gw: GatewayBase, text: str, sentence_id: str) -> AnalyzedSentence:
    """Tokenize through the gateway and align words."""
    return analyze(sentence_id, text, gw.tokenize(text))


def _mask_positions(s: AnalyzedSentence, word_indices: tuple[int, ...]) -> tuple[int, ...]:
    """Token positions to mask for the given words; all must be maskable."""
    positions = []
    for i in word_indices:
        span = s.words[i]
        if not maskable(span):
            raise SkippedWord(
                f"word {i} ({s.word_text(i)!r}) spans "
                f"{span.token_end - span.token_start} tokens"
            )
        positions.append(span.token_start)
    return tuple(positions)


def _fetch(gw: GatewayBase, s: AnalyzedSentence, masked: tuple[int, ...]) -> dict[int, np.ndarray]:
    request = DistributionRequest(
        request_id=f"{s.id}:mask={','.join(map(str, masked))}",
        token_ids=s.token_ids,
        masked_positions=masked,
    )
    return gw.distributions(request).per_position


def global_affinity(gw: GatewayBase, s: AnalyzedSentence, i: int) -> float:
    """P(original token at i | sentence with i masked)."""
    (pos,) = _mask_positions(s, (i,))
    original = s.token_ids[pos]
    vocab_size = gw.handshake().vocab_size
    if not 0 <= original < vocab_size:
        raise SkippedWord(f"word {i} token id {original} not in vocabulary")
    log_probs = _fetch(gw, s, (pos,))[pos]
    return float(np.exp(log_probs[original]))


def local_affinity(gw: GatewayBase, s: AnalyzedSentence, i: int, j: int) -> float:
    """JSD at position i between masking {i} and masking {i, j}."""
    if i == j:
        raise ValueError("local affinity requires two distinct words")
    (pos_i, pos_j) = _mask_positions(s, (i, j))
    base = _fetch(gw, s, (pos_i,))[pos_i]
    paired = _fetch(gw, s, (pos_i, pos_j))[pos_i]
    return jsd(np.exp(base), np.exp(paired))


def try_global(gw: GatewayBase, s: AnalyzedSentence, i: int) -> AffinityRecord:
    """Global affinity as a record; skips become data, not exceptions."""
    try:
        value = global_affinity(gw, s, i)
    except SkippedWord as exc:
        return AffinityRecord(sentence_id=s.id, kind="global", i=i,
                              skipped=exc.reason)
    return AffinityRecord(sentence_id=s.id, kind="global", i=i, value=value)


def try_local(gw: GatewayBase, s: AnalyzedSentence, i: int, j: int) -> AffinityRecord:
    try:
        value = local_affinity(gw, s, i, j)
    except SkippedWord as exc:
        return AffinityRecord(sentence_id=s.id, kind="local", i=i, j=j,
                              skipped=exc.reason)
    return AffinityRecord(sentence_id=s.id, kind="local", i=i, j=j, value=value)


@dataclass(frozen=True)
class PairwiseAffinityMatrix:
    """All local affinities of one sentence; absent where skipped."""

    sentence_id: str
    size: int
    values: dict[tuple[int, int], float]
    skips: dict[int, str]  # word index -> reason its row/column is absent

    def at(self, i: int, j: int) -> Optional[float]:
        return self.values.get((i, j))


def pairwise_matrix(gw: GatewayBase, s: AnalyzedSentence) -> PairwiseAffinityMatrix:
    """Local affinity for every ordered pair of maskable words.

    Fetches each word's single-mask base distribution once and reuses it
    against all L-1 partners: L single-mask plus L(L-1) double-mask
    position queries at most.
    """
    skips: dict[int, str] = {}
    usable: list[int] = []
    for i in range(len(s.words)):
        if maskable(s.words[i]):
            usable.append(i)
        else:
            span = s.words[i]
            skips[i] = (f"word {i} ({s.word_text(i)!r}) spans "
                        f"{span.token_end - span.token_start} tokens")

    base: dict[int, np.ndarray] = {}
    for i in usable:
        pos = s.words[i].token_start
        base[i] = np.exp(_fetch(gw, s, (pos,))[pos])

    values: dict[tuple[int, int], float] = {}
    for i in usable:
        pos_i = s.words[i].token_start
        for j in usable:
            if i == j:
                continue
            pos_j = s.words[j].token_start
            paired = _fetch(gw, s, (pos_i, pos_j))[pos_i]
            values[(i, j)] = jsd(base[i], np.exp(paired))
    return PairwiseAffinityMatrix(sentence_id=s.id, size=len(s.words),
                                  values=values, skips=skips)
