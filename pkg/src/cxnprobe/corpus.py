"""Streaming corpus analysis: n-gram counts and constructional usage.

Normalization is fixed and shared by every code path: casefold the line,
split on whitespace, strip edge punctuation from each chunk; empty cores
vanish. A query matches wherever n consecutive words equal its pattern;
overlapping windows each count, and newlines are hard boundaries.

The counter has to chew through training corpora, so it never tokenizes
the whole stream: for each query it picks the longest pattern word as an
anchor, scans for it with str.find (memchr speed), and only on a hit does
the word-level verification run. Matches are rare in real text, so the
scan cost is a handful of C-speed passes per block. Shards (.txt or
.txt.gz) are independent: any partition of the corpus at line boundaries
merges to the whole-corpus counts.
"""

from __future__ import annotations

import gzip
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence, TextIO

from .affinity import analyze_with, try_global
from .core import strip_edge_punct, word_chunks
from .errors import EncodingError, LengthError, OffsetMismatch
from .gateway.types import GatewayBase

_BLOCK_CHARS = 1 << 22


@dataclass(frozen=True)
class NgramQuery:
    pattern: tuple[str, ...]

    def __init__(self, pattern: Sequence[str]):
        words = tuple(w.casefold() for w in pattern)
        if not 2 <= len(words) <= 3:
            raise ValueError(f"pattern must have 2 or 3 words, got {len(words)}")
        for w in words:
            if not w or strip_edge_punct(w) != w or any(c.isspace() for c in w):
                raise ValueError(f"pattern word {w!r} is not a normalized word")
        object.__setattr__(self, "pattern", words)

    @property
    def n(self) -> int:
        return len(self.pattern)

    def __str__(self) -> str:
        return " ".join(self.pattern)


def normalized_words(line: str) -> list[str]:
    """The word stream of one line under the normative normalization."""
    cf = line.casefold()
    words = []
    for start, end in word_chunks(cf):
        core = strip_edge_punct(cf[start:end])
        if core:
            words.append(core)
    return words


class MultiPatternCounter:
    """Anchor-scan counter; equivalent to sliding windows over
    normalized_words of every line."""

    def __init__(self, queries: Iterable[NgramQuery]):
        self.queries = list(queries)
        self._word_char_cache: dict[str, bool] = {}
        # anchor word -> [(query, position of the anchor in its pattern)];
        # the anchor is each pattern's longest word at its first position,
        # so every matching window aligns with exactly one anchor hit
        self._anchors: dict[str, list[tuple[NgramQuery, int]]] = {}
        for query in self.queries:
            anchor = max(query.pattern, key=len)
            self._anchors.setdefault(anchor, []).append(
                (query, query.pattern.index(anchor)))

    def count_block(self, block: str, counts: dict[NgramQuery, int]) -> None:
        """Count matches inside one block; blocks must be cut at line
        boundaries so no window straddles them."""
        cf = block.casefold()
        size = len(cf)
        find = cf.find
        # word-character test memoized per character: the boundary
        # pre-reject runs once per raw hit and dominates on substring-heavy
        # text ("one" inside "stone"), so it has to be a dict probe
        word_char = self._word_char_cache
        for anchor, targets in self._anchors.items():
            length = len(anchor)
            pos = find(anchor)
            while pos != -1:
                # a word character flush against the hit means it sits
                # inside a longer word, by far the common case on real text
                if pos > 0:
                    c = cf[pos - 1]
                    before = word_char.get(c)
                    if before is None:
                        before = word_char[c] = c.isalnum()
                    if before:
                        pos = find(anchor, pos + 1)
                        continue
                after_at = pos + length
                if after_at < size:
                    c = cf[after_at]
                    after = word_char.get(c)
                    if after is None:
                        after = word_char[c] = c.isalnum()
                    if after:
                        pos = find(anchor, pos + 1)
                        continue
                hit = self._verify_chunk(cf, pos, length, size)
                if hit is not None:
                    for query, k in targets:
                        if self._verify_window(cf, size, hit, query.pattern, k):
                            counts[query] = counts.get(query, 0) + 1
                    pos = find(anchor, hit[1])  # chunk consumed
                else:
                    pos = find(anchor, pos + 1)

    @staticmethod
    def _verify_chunk(cf: str, pos: int, length: int, size: int):
        """The hit must be the full core of its whitespace chunk; returns
        the chunk bounds, or None."""
        start = pos
        while start > 0 and not cf[start - 1].isspace():
            start -= 1
        end = pos + length
        while end < size and not cf[end].isspace():
            end += 1
        core = strip_edge_punct(cf[start:end])
        # same length as the hit and first occurrence at the hit position
        # means the chunk's core is exactly the anchor at this hit
        if len(core) != length or cf.find(core, start, end) != pos:
            return None
        return start, end

    @staticmethod
    def _next_chunk(cf: str, size: int, end: int):
        """Bounds of the chunk after `end`, or None at a newline/block edge."""
        k = end
        while k < size and cf[k].isspace():
            if cf[k] == "\n":
                return None
            k += 1
        if k >= size:
            return None
        stop = k
        while stop < size and not cf[stop].isspace():
            stop += 1
        return k, stop

    @staticmethod
    def _prev_chunk(cf: str, start: int):
        k = start
        while k > 0 and cf[k - 1].isspace():
            if cf[k - 1] == "\n":
                return None
            k -= 1
        if k == 0:
            return None
        stop = k
        while stop > 0 and not cf[stop - 1].isspace():
            stop -= 1
        return stop, k

    def _next_word(self, cf: str, size: int, end: int):
        """Core and end of the next word after `end`; pure-punctuation
        chunks vanish from the word stream and are walked over."""
        while True:
            nxt = self._next_chunk(cf, size, end)
            if nxt is None:
                return None
            nstart, nend = nxt
            core = strip_edge_punct(cf[nstart:nend])
            if core:
                return core, nend
            end = nend

    def _prev_word(self, cf: str, start: int):
        while True:
            prev = self._prev_chunk(cf, start)
            if prev is None:
                return None
            pstart, pend = prev
            core = strip_edge_punct(cf[pstart:pend])
            if core:
                return core, pstart
            start = pstart

    def _verify_window(self, cf: str, size: int, hit: tuple[int, int],
                       pattern: tuple[str, ...], k: int) -> bool:
        start = hit[0]
        for w in range(k - 1, -1, -1):
            prev = self._prev_word(cf, start)
            if prev is None or prev[0] != pattern[w]:
                return False
            start = prev[1]
        end = hit[1]
        for w in range(k + 1, len(pattern)):
            nxt = self._next_word(cf, size, end)
            if nxt is None or nxt[0] != pattern[w]:
                return False
            end = nxt[1]
        return True


@dataclass
class CountResult:
    counts: dict[NgramQuery, int]
    shards: list[Path] = field(default_factory=list)
    errors: list[tuple[str, str]] = field(default_factory=list)
    chars_processed: int = 0

    def merge(self, other: "CountResult") -> "CountResult":
        merged = dict(self.counts)
        for query, count in other.counts.items():
            merged[query] = merged.get(query, 0) + count
        return CountResult(counts=merged, shards=self.shards + other.shards,
                           errors=self.errors + other.errors,
                           chars_processed=self.chars_processed + other.chars_processed)


def corpus_shards(root: str | Path) -> list[Path]:
    """All .txt/.txt.gz shards under a directory (or the single file)."""
    root = Path(root)
    if root.is_file():
        return [root]
    return sorted(p for p in root.rglob("*")
                  if p.is_file() and (p.suffix == ".txt" or p.name.endswith(".txt.gz")))


def _open_shard(path: Path) -> TextIO:
    if path.name.endswith(".gz"):
        return gzip.open(path, "rt", encoding="utf-8", errors="replace")
    return open(path, encoding="utf-8", errors="replace")


def _line_blocks(stream: TextIO, block_chars: int = _BLOCK_CHARS) -> Iterator[str]:
    """Blocks cut at line boundaries so windows never straddle them."""
    carry = ""
    while True:
        chunk = stream.read(block_chars)
        if not chunk:
            break
        chunk = carry + chunk
        cut = chunk.rfind("\n")
        if cut == -1:
            carry = chunk
            continue
        carry = chunk[cut + 1:]
        yield chunk[:cut + 1]
    if carry:
        yield carry


def count_text(text: str, queries: Iterable[NgramQuery]) -> dict[NgramQuery, int]:
    """Counts over an in-memory corpus (mostly for synthetic tests)."""
    counter = MultiPatternCounter(queries)
    counts = {q: 0 for q in counter.queries}
    counter.count_block(text, counts)
    return counts


def count_ngrams(source: str | Path | Sequence[Path],
                 queries: Iterable[NgramQuery]) -> CountResult:
    """Counts over a corpus directory, file, or explicit shard list.

    A shard that cannot be read is skipped and reported, never fatal.
    """
    shards = (corpus_shards(source) if isinstance(source, (str, Path))
              else [Path(p) for p in source])
    counter = MultiPatternCounter(queries)
    result = CountResult(counts={q: 0 for q in counter.queries})
    for shard in shards:
        try:
            with _open_shard(shard) as stream:
                for block in _line_blocks(stream):
                    counter.count_block(block, result.counts)
                    result.chars_processed += len(block)
        except OSError as exc:
            result.errors.append((str(shard), str(exc)))
            continue
        result.shards.append(shard)
    return result


# --- occurrence extraction ----------------------------------------------------

@dataclass(frozen=True)
class Occurrence:
    sentence: str
    word_offsets: tuple[tuple[int, int], ...]  # per pattern word, into sentence
    shard: str
    line_no: int


_SENTENCE_ENDERS = ".?!"


def _sentence_bounds(line: str) -> list[tuple[int, int]]:
    """Sentence segments of a line: terminal punctuation followed by
    whitespace ends a sentence. Heuristic; the classifier only needs
    enough context, not perfect segmentation."""
    bounds = []
    n = len(line)
    start = 0
    k = 0
    while k < n:
        if line[k] in _SENTENCE_ENDERS:
            while k + 1 < n and line[k + 1] in _SENTENCE_ENDERS:
                k += 1
            if k + 1 >= n or line[k + 1].isspace():
                bounds.append((start, k + 1))
                start = k + 1
        k += 1
    if start < n:
        bounds.append((start, n))
    return bounds


def _trimmed(line: str, start: int, end: int) -> tuple[int, int]:
    while start < end and line[start].isspace():
        start += 1
    while end > start and line[end - 1].isspace():
        end -= 1
    return start, end


def extract_occurrences(source: str | Path | Sequence[Path],
                        query: NgramQuery) -> Iterator[Occurrence]:
    """Sentences containing the n-gram, with per-word character offsets.

    Matching runs over whole lines exactly as in count_ngrams, so
    re-counting the emissions reproduces the counts; the enclosing
    sentence (extended when the match straddles a segment break) is only
    the context handed to the classifier.
    """
    shards = (corpus_shards(source) if isinstance(source, (str, Path))
              else [Path(p) for p in source])
    for shard in shards:
        try:
            stream = _open_shard(shard)
        except OSError:
            continue
        with stream:
            for line_no, raw in enumerate(stream, start=1):
                line = raw.rstrip("\n")
                if not line:
                    continue
                words = []
                for start, end in word_chunks(line):
                    core = strip_edge_punct(line[start:end])
                    if core:
                        core_start = line.index(core, start, end)
                        words.append((core.casefold(), core_start,
                                      core_start + len(core)))
                matches = [
                    k for k in range(len(words) - query.n + 1)
                    if tuple(words[k + d][0] for d in range(query.n)) == query.pattern
                ]
                if not matches:
                    continue
                bounds = _sentence_bounds(line)
                for k in range(len(matches)):
                    first = words[matches[k]]
                    last = words[matches[k] + query.n - 1]
                    seg_start = max(s for s, e in bounds if s <= first[1])
                    seg_end = min(e for s, e in bounds if e >= last[2])
                    seg_start, seg_end = _trimmed(line, seg_start, seg_end)
                    sentence = line[seg_start:seg_end]
                    yield Occurrence(
                        sentence=sentence,
                        word_offsets=tuple(
                            (words[matches[k] + d][1] - seg_start,
                             words[matches[k] + d][2] - seg_start)
                            for d in range(query.n)),
                        shard=str(shard), line_no=line_no)


# --- constructional usage classifier -------------------------------------------

@dataclass(frozen=True)
class UsageClassification:
    sentence: str
    phrase_offsets: tuple[tuple[int, int], tuple[int, int]]
    affinities: tuple[float, float]
    constructional: bool


@dataclass
class UsageSummary:
    n_constructional: int = 0
    n_total: int = 0
    n_skipped: int = 0
    classifications: list[UsageClassification] = field(default_factory=list)
    skip_reasons: dict[str, int] = field(default_factory=dict)


def classify_usage(occurrences: Iterable[Occurrence], gw: GatewayBase,
                   threshold: float = 0.9) -> UsageSummary:
    """Constructional usage heuristic over bigram occurrences: each word
    masked on its own (the other visible), both global affinities must
    reach the threshold. Output order = input order; skips are tallied
    apart from negatives."""
    summary = UsageSummary()

    def skip(reason: str) -> None:
        summary.n_skipped += 1
        summary.skip_reasons[reason] = summary.skip_reasons.get(reason, 0) + 1

    for number, occ in enumerate(occurrences):
        if len(occ.word_offsets) != 2:
            raise ValueError("usage classification is defined for bigrams")
        try:
            s = analyze_with(gw, occ.sentence, f"occ{number}")
        except (OffsetMismatch, EncodingError):
            skip("OffsetMismatch")
            continue
        values: list[float] = []
        reason = None
        for start, end in occ.word_offsets:
            span = s.word_at(start, end)
            if span is None:
                reason = "TargetNotAligned"
                break
            try:
                record = try_global(gw, s, span.word_index)
            except LengthError:
                reason = "LengthError"
                break
            if record.skipped is not None:
                reason = "SkippedWord"
                break
            values.append(record.value)
        if reason is not None:
            skip(reason)
            continue
        affinities = (values[0], values[1])
        constructional = affinities[0] >= threshold and affinities[1] >= threshold
        summary.n_total += 1
        summary.n_constructional += int(constructional)
        summary.classifications.append(UsageClassification(
            sentence=occ.sentence, phrase_offsets=occ.word_offsets,
            affinities=affinities, constructional=constructional))
    return summary
