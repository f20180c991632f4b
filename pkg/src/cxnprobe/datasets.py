"""Loaders and validators for the four evaluation datasets.

Everything is normalized to one JSONL record per line, UTF-8:

    {"dataset": "...", "sentence": "...", "label": "...",
     "targets": [[char_start, char_end, role], ...], "meta": {...}}

Upstream corpora ship in assorted formats; converting them to this schema
is a one-off script outside the library, which keeps every loader
testable against small fixtures. Loaders are streaming, keep source
order, and collect rejects instead of failing: every input line is
accounted for as either an emitted record or a reject with a reason.

Per-dataset specifics:

  cec     label CEC/EAP/AAP, exactly one "so" target; records may carry
          meta.that_positions + meta.causal_index marking which "that"
          completes the causal construction (the multi-that subset).
  magpie  input lines are sentences carrying per-word literal/figurative
          labels plus an annotation confidence; emits one record per
          word, dropping sentences under the confidence floor and words
          whose offsets do not match the sentence.
  cogs    partially substantive constructions with role-tagged fixed
          words; comparative-correlative items also carry their two
          schematic comparative slots.
  npn     noun-preposition-noun items; the loader locates the exact
          noun+prep+noun trigram and derives both noun targets from it.
"""

from __future__ import annotations

import json
import os
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator, Optional, Sequence

from .core import strip_edge_punct, word_chunks
from .errors import (EndpointError, FormViolation, MissingTarget, SchemaError,
                     UnknownConstruction)

MAGPIE_CONFIDENCE_FLOOR = 0.99
NPN_PREPOSITIONS = ("after", "upon", "by", "to")

COGS_CONSTRUCTIONS = {
    "causative-with": {"with"},
    "comparative-correlative": {"the1", "the2", "cmp1", "cmp2"},
    "conative": {"at"},
    "let-alone": {"let", "alone"},
    "much-less": {"much", "less"},
    "way-manner": {"way"},
}

# the CC comparative slots are schematic, not fixed words
COGS_FIXED_ROLES = {
    "causative-with": ("with",),
    "comparative-correlative": ("the1", "the2"),
    "conative": ("at",),
    "let-alone": ("let", "alone"),
    "much-less": ("much", "less"),
    "way-manner": ("way",),
}


@dataclass(frozen=True)
class Target:
    char_start: int
    char_end: int
    role: str

    def as_list(self) -> list:
        return [self.char_start, self.char_end, self.role]


@dataclass(frozen=True)
class EvalRecord:
    dataset: str
    record_id: str
    sentence: str
    label: str
    targets: tuple[Target, ...]
    meta: dict

    def target(self, role: str) -> Target:
        for t in self.targets:
            if t.role == role:
                return t
        raise KeyError(f"{self.record_id} has no target with role {role!r}")

    def has_role(self, role: str) -> bool:
        return any(t.role == role for t in self.targets)


@dataclass(frozen=True)
class Reject:
    line_no: int
    reason: str
    detail: str


@dataclass
class LoadResult:
    """Records plus full filter accounting: emitted + rejected = input."""

    records: list[EvalRecord] = field(default_factory=list)
    rejects: list[Reject] = field(default_factory=list)
    n_input: int = 0

    @property
    def reject_tally(self) -> dict[str, int]:
        tally: dict[str, int] = {}
        for r in self.rejects:
            tally[r.reason] = tally.get(r.reason, 0) + 1
        return tally


def _iter_lines(path: str | Path) -> Iterator[tuple[int, str]]:
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if line:
                yield line_no, line


def _parse_line(line: str) -> dict:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise SchemaError("line is not a JSON object")
    return obj


def _check_offsets(sentence: str, start, end) -> tuple[int, int]:
    if not isinstance(start, int) or not isinstance(end, int):
        raise SchemaError(f"offsets must be integers, got {start!r}:{end!r}")
    if not (0 <= start < end <= len(sentence)):
        raise SchemaError(f"offsets {start}:{end} out of bounds for sentence")
    return start, end


def _targets_from(obj: dict, sentence: str) -> list[Target]:
    raw = obj.get("targets", [])
    if not isinstance(raw, list):
        raise SchemaError("targets must be a list")
    targets = []
    for item in raw:
        if not (isinstance(item, (list, tuple)) and len(item) == 3):
            raise SchemaError(f"target must be [start, end, role], got {item!r}")
        start, end = _check_offsets(sentence, item[0], item[1])
        targets.append(Target(start, end, str(item[2])))
    return targets


def _load(path: str | Path, dataset: str,
          build: Callable[[dict, str], EvalRecord]) -> LoadResult:
    result = LoadResult()
    for line_no, line in _iter_lines(path):
        result.n_input += 1
        try:
            obj = _parse_line(line)
            if obj.get("dataset", dataset) != dataset:
                raise SchemaError(f"record is for dataset {obj['dataset']!r}")
            sentence = obj.get("sentence")
            if not isinstance(sentence, str) or not sentence:
                raise SchemaError("missing or empty sentence")
            record = build(obj, f"{dataset}:{line_no}")
        except SchemaError as exc:
            result.rejects.append(Reject(line_no, type(exc).__name__, str(exc)))
            continue
        result.records.append(record)
    return result


# --- CEC ----------------------------------------------------------------

CEC_LABELS = ("CEC", "EAP", "AAP")


def load_cec(path: str | Path) -> LoadResult:
    def build(obj: dict, record_id: str) -> EvalRecord:
        sentence = obj["sentence"]
        label = obj.get("label")
        if label not in CEC_LABELS:
            raise SchemaError(f"label must be one of {CEC_LABELS}, got {label!r}")
        targets = _targets_from(obj, sentence)
        so_targets = [t for t in targets if t.role == "so"]
        if len(so_targets) != 1:
            raise MissingTarget(f"need exactly one 'so' target, got {len(so_targets)}")
        meta = dict(obj.get("meta", {}))
        if "that_positions" in meta or "causal_index" in meta:
            positions = meta.get("that_positions")
            if not (isinstance(positions, list) and len(positions) >= 2):
                raise SchemaError("multi-that records need >= 2 that_positions")
            spans = []
            for pair in positions:
                if not (isinstance(pair, (list, tuple)) and len(pair) == 2):
                    raise SchemaError(f"that position must be [start, end], got {pair!r}")
                spans.append(list(_check_offsets(sentence, pair[0], pair[1])))
            causal = meta.get("causal_index")
            if not isinstance(causal, int) or not 0 <= causal < len(spans):
                raise SchemaError(f"causal_index {causal!r} out of range")
            meta["that_positions"] = spans
        return EvalRecord(dataset="cec", record_id=obj.get("id", record_id),
                          sentence=sentence, label=label,
                          targets=tuple(targets), meta=meta)

    return _load(path, "cec", build)


def multithat_subset(records: Iterable[EvalRecord]) -> list[EvalRecord]:
    return [r for r in records if "causal_index" in r.meta]


# --- MAGPIE ---------------------------------------------------------------

def load_magpie(path: str | Path,
                confidence_floor: float = MAGPIE_CONFIDENCE_FLOOR) -> LoadResult:
    """Per-word records; sentence- and word-level filters are per-reason
    rejects so the accounting still adds up (a dropped word is one reject
    even when its sentence survives)."""
    result = LoadResult()
    for line_no, line in _iter_lines(path):
        try:
            obj = _parse_line(line)
            sentence = obj.get("sentence")
            if not isinstance(sentence, str) or not sentence:
                raise SchemaError("missing or empty sentence")
            confidence = obj.get("confidence")
            if not isinstance(confidence, (int, float)):
                raise SchemaError(f"confidence must be a number, got {confidence!r}")
            words = obj.get("words")
            if not isinstance(words, list) or not words:
                raise SchemaError("missing per-word labels")
        except SchemaError as exc:
            result.n_input += 1
            result.rejects.append(Reject(line_no, type(exc).__name__, str(exc)))
            continue

        result.n_input += len(words)
        if confidence < confidence_floor:
            result.rejects.extend(
                Reject(line_no, "LowConfidence",
                       f"sentence confidence {confidence} < {confidence_floor}")
                for _ in words)
            continue

        for word_no, word in enumerate(words):
            if not isinstance(word, dict):
                result.rejects.append(Reject(line_no, "SchemaError",
                                             f"word entry must be an object, got {word!r}"))
                continue
            label = word.get("label")
            if label not in ("literal", "figurative"):
                result.rejects.append(Reject(line_no, "SchemaError",
                                             f"word label must be literal/figurative, got {label!r}"))
                continue
            try:
                start, end = _check_offsets(sentence, word.get("start"), word.get("end"))
                surface = word.get("word")
                if surface is not None and sentence[start:end] != surface:
                    raise SchemaError(f"expected {surface!r}, found {sentence[start:end]!r}")
            except SchemaError as exc:
                result.rejects.append(Reject(line_no, "WrongOffsets", str(exc)))
                continue
            meta = {"confidence": float(confidence)}
            if "expression" in obj:
                meta["expression"] = str(obj["expression"])
            result.records.append(EvalRecord(
                dataset="magpie",
                record_id=f"{obj.get('id', f'magpie:{line_no}')}:w{word_no}",
                sentence=sentence, label=label,
                targets=(Target(start, end, "word"),), meta=meta))
    return result


# --- CoGS -----------------------------------------------------------------

def load_cogs(path: str | Path) -> LoadResult:
    def build(obj: dict, record_id: str) -> EvalRecord:
        sentence = obj["sentence"]
        construction = obj.get("construction")
        if construction not in COGS_CONSTRUCTIONS:
            raise UnknownConstruction(f"unknown construction {construction!r}")
        targets = _targets_from(obj, sentence)
        roles = {t.role for t in targets}
        required = COGS_CONSTRUCTIONS[construction]
        if roles != required:
            raise SchemaError(
                f"{construction} needs roles {sorted(required)}, got {sorted(roles)}")
        return EvalRecord(dataset="cogs", record_id=obj.get("id", record_id),
                          sentence=sentence, label=construction,
                          targets=tuple(targets),
                          meta=dict(obj.get("meta", {})))

    return _load(path, "cogs", build)


# --- NPN ------------------------------------------------------------------

def find_trigram(sentence: str, noun: str, prep: str) -> Optional[tuple[Target, Target]]:
    """Locate noun+prep+noun as three consecutive words (casefolded,
    edge punctuation ignored); returns the two noun targets."""
    words = []
    for start, end in word_chunks(sentence):
        core = strip_edge_punct(sentence[start:end])
        if core:
            words.append((core, start, end))
    noun_cf, prep_cf = noun.casefold(), prep.casefold()
    for k in range(len(words) - 2):
        (w1, s1, e1), (w2, _, _), (w3, s3, e3) = words[k], words[k + 1], words[k + 2]
        if (w1.casefold(), w2.casefold(), w3.casefold()) == (noun_cf, prep_cf, noun_cf):
            c1 = sentence.index(w1, s1, e1)
            c3 = sentence.index(w3, s3, e3)
            return (Target(c1, c1 + len(w1), "noun1"),
                    Target(c3, c3 + len(w3), "noun2"))
    return None


def load_npn(path: str | Path) -> LoadResult:
    def build(obj: dict, record_id: str) -> EvalRecord:
        sentence = obj["sentence"]
        meta_in = obj.get("meta", {}) if isinstance(obj.get("meta"), dict) else {}
        noun = obj.get("noun", meta_in.get("noun"))
        if not isinstance(noun, str) or not noun:
            raise SchemaError("missing noun")
        prep = obj.get("preposition", meta_in.get("preposition"))
        if prep not in NPN_PREPOSITIONS:
            raise SchemaError(f"preposition must be one of {NPN_PREPOSITIONS}, got {prep!r}")
        acceptability = obj.get("acceptability", meta_in.get("acceptability"))
        if not isinstance(acceptability, int) or not 1 <= acceptability <= 5:
            raise SchemaError(f"acceptability must be an integer 1-5, got {acceptability!r}")
        found = find_trigram(sentence, noun, prep)
        if found is None:
            raise FormViolation(f"sentence lacks the trigram {noun!r} {prep!r} {noun!r}")
        return EvalRecord(dataset="npn", record_id=obj.get("id", record_id),
                          sentence=sentence, label=prep, targets=found,
                          meta={"noun": noun, "preposition": prep,
                                "acceptability": acceptability})

    return _load(path, "npn", build)


# --- common-vocabulary restriction -----------------------------------------

def common_vocab_filter(records: Sequence[EvalRecord],
                        gateways: Sequence) -> tuple[list[EvalRecord], list[Reject]]:
    """Keep records whose every target is maskable under every gateway.

    Cross-model comparisons are only fair over items all models can
    process, so a single multi-token rendering anywhere drops the record.
    """
    from .affinity import analyze_with
    from .core import maskable
    from .errors import OffsetMismatch

    kept: list[EvalRecord] = []
    dropped: list[Reject] = []
    for idx, record in enumerate(records):
        reason = None
        for gw in gateways:
            try:
                s = analyze_with(gw, record.sentence, record.record_id)
            except OffsetMismatch as exc:
                reason = f"alignment failed: {exc}"
                break
            for target in record.targets:
                span = s.word_at(target.char_start, target.char_end)
                if span is None:
                    reason = f"target {target.role} not on a word boundary"
                    break
                if not maskable(span):
                    reason = (f"target {target.role} multi-token under "
                              f"{gw.handshake().model_name}")
                    break
            if reason:
                break
        if reason is None:
            kept.append(record)
        else:
            dropped.append(Reject(idx, "NotInCommonVocabulary", reason))
    return kept, dropped


# --- NPN generation ---------------------------------------------------------

NPN_PROMPT = (
    'An NPN construction is one like "day by day" or "face to face". '
    "It has a repeated singular noun with a preposition in the middle. "
    'Other prepositions are also possible: "book upon book", "week over week", '
    '"year after year". Please use "{phrase}" in an NPN construction, '
    'placing "{phrase}" in the middle of the sentence. '
    "Make sure the sentence establishes a context in which the noun makes sense. "
    "Please provide only the sentence in the response."
)

API_KEY_ENV = "CXNPROBE_LLM_API_KEY"


def http_chat_endpoint(url: str, model: str = "gpt-4-0613",
                       temperature: float = 0.7, max_tokens: int = 100,
                       api_key: str | None = None) -> Callable[[str], str]:
    """A completion callable speaking the generic chat-completion API."""
    key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)

    def complete(prompt: str) -> str:
        body = json.dumps({
            "model": model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": temperature,
            "max_tokens": max_tokens,
        }).encode("utf-8")
        request = urllib.request.Request(url, data=body, method="POST")
        request.add_header("Content-Type", "application/json")
        if key:
            request.add_header("Authorization", f"Bearer {key}")
        try:
            with urllib.request.urlopen(request, timeout=120) as response:
                payload = json.loads(response.read().decode("utf-8"))
        except Exception as exc:
            raise EndpointError(f"completion request failed: {exc}") from exc
        try:
            return payload["choices"][0]["message"]["content"].strip()
        except (KeyError, IndexError, TypeError) as exc:
            raise EndpointError(f"malformed completion response: {payload!r}") from exc

    return complete


@dataclass
class GenerationFailure:
    noun: str
    preposition: str
    attempts: list[str]


def generate_npn(nouns: Sequence[str], preps: Sequence[str],
                 llm: Callable[[str], str], retries: int = 3,
                 ) -> tuple[list[EvalRecord], list[GenerationFailure]]:
    """One candidate sentence per (noun, preposition).

    Each generation is validated to contain the exact trigram; failures
    are re-prompted up to `retries` times and then reported. Candidates
    carry acceptability 0 in meta: judgements are ingested later, never
    produced here.
    """
    records: list[EvalRecord] = []
    failures: list[GenerationFailure] = []
    for noun in nouns:
        for prep in preps:
            phrase = f"{noun} {prep} {noun}"
            prompt = NPN_PROMPT.format(phrase=phrase)
            attempts: list[str] = []
            for _ in range(retries):
                sentence = llm(prompt)
                attempts.append(sentence)
                found = find_trigram(sentence, noun, prep)
                if found is not None:
                    records.append(EvalRecord(
                        dataset="npn",
                        record_id=f"npn:{noun}:{prep}",
                        sentence=sentence, label=prep, targets=found,
                        meta={"noun": noun, "preposition": prep,
                              "acceptability": 0, "generated": True}))
                    break
            else:
                failures.append(GenerationFailure(noun, prep, attempts))
    return records, failures


def write_jsonl(records: Iterable[EvalRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            row = {"dataset": r.dataset, "id": r.record_id, "sentence": r.sentence,
                   "label": r.label, "targets": [t.as_list() for t in r.targets],
                   "meta": r.meta}
            fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")
