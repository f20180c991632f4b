"""Domain types and word/token alignment.

A sentence is analyzed once into an AnalyzedSentence: the raw text, the
model's token ids, and one WordSpan per whitespace-delimited word. All
affinity queries are phrased in word indices and resolved to token
positions through the spans.

Word identity is the whitespace chunk with leading/trailing punctuation
stripped ("alone," counts as the word "alone"); the chunk's full character
range stays on the span so that spans tile the non-whitespace text, but
the token range covers only the core word, so masking a word never masks
its attached punctuation.
"""

from __future__ import annotations

import math
import unicodedata
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import OffsetMismatch

Token = tuple[int, int, int]  # (token_id, char_start, char_end)


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def strip_edge_punct(word: str) -> str:
    """Word identity: the chunk with leading/trailing punctuation removed."""
    start, end = 0, len(word)
    while start < end and _is_punct(word[start]):
        start += 1
    while end > start and _is_punct(word[end - 1]):
        end -= 1
    return word[start:end]


@dataclass(frozen=True)
class WordSpan:
    """One word of a sentence with its character and token extents.

    char_start/char_end cover the whole whitespace chunk (punctuation
    included); core_start/core_end cover the word proper. token_start/
    token_end is the minimal token slice covering the core, end exclusive.
    """

    word_index: int
    char_start: int
    char_end: int
    core_start: int
    core_end: int
    token_start: int
    token_end: int

    @property
    def is_single_token(self) -> bool:
        return self.token_end - self.token_start == 1


@dataclass(frozen=True)
class AnalyzedSentence:
    """Raw text, token ids, and aligned word spans; immutable once built."""

    id: str
    text: str
    token_ids: tuple[int, ...]
    words: tuple[WordSpan, ...]

    def __post_init__(self):
        prev_end = 0
        for span in self.words:
            if not (0 <= span.char_start <= span.core_start < span.core_end <= span.char_end <= len(self.text)):
                raise ValueError(f"span {span.word_index} character range out of bounds")
            if span.char_start < prev_end:
                raise ValueError(f"span {span.word_index} overlaps previous span")
            prev_end = span.char_end
            if not (0 <= span.token_start < span.token_end <= len(self.token_ids)):
                raise ValueError(f"span {span.word_index} token range out of bounds")

    def __len__(self) -> int:
        return len(self.words)

    def word_text(self, i: int) -> str:
        """The word proper (edge punctuation stripped)."""
        span = self.words[i]
        return self.text[span.core_start:span.core_end]

    def chunk_text(self, i: int) -> str:
        """The whole whitespace chunk, punctuation included."""
        span = self.words[i]
        return self.text[span.char_start:span.char_end]

    def word_at(self, char_start: int, char_end: int) -> Optional[WordSpan]:
        """The span whose chunk contains [char_start, char_end), if any."""
        for span in self.words:
            if span.char_start <= char_start and char_end <= span.char_end:
                return span
        return None


@dataclass(frozen=True)
class Distribution:
    """A full-vocabulary output distribution for one word position.

    Stored in log space; exp(log_probs) must sum to 1 within 1e-4 and all
    entries must be finite.
    """

    log_probs: np.ndarray
    position: int
    context_id: str

    def __post_init__(self):
        lp = np.asarray(self.log_probs, dtype=np.float64)
        object.__setattr__(self, "log_probs", lp)
        if not np.all(np.isfinite(lp)):
            raise ValueError("log_probs contains non-finite entries")
        total = float(np.sum(np.exp(lp)))
        if not math.isclose(total, 1.0, abs_tol=1e-4):
            raise ValueError(f"distribution does not normalize: sum={total}")

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs)

    def __len__(self) -> int:
        return len(self.log_probs)


@dataclass(frozen=True)
class AffinityRecord:
    """Result of one affinity query, including recorded skips."""

    sentence_id: str
    kind: str  # "global" | "local"
    i: int
    j: Optional[int] = None
    value: Optional[float] = None
    skipped: Optional[str] = None

    def __post_init__(self):
        if self.kind not in ("global", "local"):
            raise ValueError(f"kind must be global or local, got {self.kind!r}")
        if self.kind == "global" and self.j is not None:
            raise ValueError("global affinity carries no second position")
        if self.kind == "local":
            if self.j is None:
                raise ValueError("local affinity requires a second position")
            if self.j == self.i:
                raise ValueError("local affinity requires j != i")
        if self.value is not None and not (0.0 <= self.value <= 1.0):
            raise ValueError(f"affinity out of [0,1]: {self.value}")
        if self.value is None and self.skipped is None:
            raise ValueError("record must carry a value or a skip reason")

    def to_dict(self) -> dict:
        d = {"sentence_id": self.sentence_id, "kind": self.kind, "i": self.i}
        if self.kind == "local":
            d["j"] = self.j
        d["value"] = self.value
        if self.skipped is not None:
            d["skipped"] = self.skipped
        return d


def word_chunks(text: str) -> Iterable[tuple[int, int]]:
    """Offsets of whitespace-delimited chunks (Unicode whitespace)."""
    start = None
    for pos, ch in enumerate(text):
        if ch.isspace():
            if start is not None:
                yield start, pos
                start = None
        elif start is None:
            start = pos
    if start is not None:
        yield start, len(text)


def align_words(text: str, tokens: Sequence[Token]) -> list[WordSpan]:
    """Map each word of `text` to its minimal covering token range.

    Words are whitespace-delimited chunks with edge punctuation stripped
    for identity; chunks that are pure punctuation yield no word. Tokens
    are (id, char_start, char_end) with non-decreasing offsets.

    Raises OffsetMismatch when some character of a word's core is covered
    by no token: that is a tokenizer/text disagreement and the sentence
    must be dropped.
    """
    spans: list[WordSpan] = []
    word_index = 0
    for chunk_start, chunk_end in word_chunks(text):
        core_start, core_end = chunk_start, chunk_end
        while core_start < core_end and _is_punct(text[core_start]):
            core_start += 1
        while core_end > core_start and _is_punct(text[core_end - 1]):
            core_end -= 1
        if core_start == core_end:
            continue  # pure punctuation, not a word

        covering = [
            k for k, (_, ts, te) in enumerate(tokens)
            if ts < core_end and te > core_start and ts < te
        ]
        if not covering:
            raise OffsetMismatch(
                f"word {text[core_start:core_end]!r} at {core_start} covered by no token"
            )
        token_start, token_end = covering[0], covering[-1] + 1
        covered = set()
        for k in range(token_start, token_end):
            _, ts, te = tokens[k]
            covered.update(range(max(ts, core_start), min(te, core_end)))
        missing = set(range(core_start, core_end)) - covered
        if missing:
            raise OffsetMismatch(
                f"word {text[core_start:core_end]!r} at {core_start}: "
                f"characters {sorted(missing)} covered by no token"
            )
        spans.append(WordSpan(
            word_index=word_index,
            char_start=chunk_start,
            char_end=chunk_end,
            core_start=core_start,
            core_end=core_end,
            token_start=token_start,
            token_end=token_end,
        ))
        word_index += 1
    return spans


def maskable(span: WordSpan) -> bool:
    """True iff the word occupies exactly one token.

    Multi-token words are never masked; callers record the skip rather
    than dropping the item silently.
    """
    return span.is_single_token


def analyze(sentence_id: str, text: str, tokens: Sequence[Token]) -> AnalyzedSentence:
    """Build an AnalyzedSentence from tokenizer output."""
    return AnalyzedSentence(
        id=sentence_id,
        text=text,
        token_ids=tuple(t[0] for t in tokens),
        words=tuple(align_words(text, tokens)),
    )
