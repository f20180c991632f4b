"""The construction evaluations and benchmark correlation.

Each evaluation is a pure function of (records, gateway responses,
policy): records are stably sorted by id before any reduction, skips are
tallied per reason, and n_used + n_skipped always equals the number of
candidate slots. Scores live on a 0-100 scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .affinity import analyze_with, local_affinity, try_global
from .core import AnalyzedSentence, WordSpan, maskable
from .datasets import COGS_FIXED_ROLES, EvalRecord
from .errors import (DegenerateVariance, EmptyFilter, LengthError,
                     MissingCounts, OffsetMismatch, SkippedWord,
                     TaggerUnavailable)
from .gateway.types import DistributionRequest, GatewayBase
from .stats import (NEGATIVE, POSITIVE, ScoredSample, nucleus, pearson,
                    roc_auc, words_to_percentile)
from .tagging import COMPARATIVE_TAGS, is_comparative


@dataclass(frozen=True)
class EvalScore:
    model: str
    eval_name: str
    value: float
    n_used: int
    n_skipped: int
    breakdown: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.value <= 100.0:
            raise ValueError(f"score out of [0, 100]: {self.value}")

    def to_dict(self) -> dict:
        return {"model": self.model, "eval": self.eval_name,
                "value": self.value, "n_used": self.n_used,
                "n_skipped": self.n_skipped, "breakdown": self.breakdown}


@dataclass(frozen=True)
class TaggerPolicy:
    """How comparative-ness of a candidate fill is decided.

    external: ask the gateway's tagger (substituted-in-context tags).
    rule_based: fetch surfaces only and apply the offline suffix/lexicon
    rule; usable without any tagger behind the gateway, but not meant for
    reproducing published scores.
    """

    mode: str = "external"  # "external" | "rule_based"
    use_suffix_rule: bool = True

    def __post_init__(self):
        if self.mode not in ("external", "rule_based"):
            raise ValueError(f"unknown tagger mode {self.mode!r}")


def _sorted_records(records: Iterable[EvalRecord]) -> list[EvalRecord]:
    return sorted(records, key=lambda r: r.record_id)


def _analyze(gw: GatewayBase, record: EvalRecord) -> AnalyzedSentence:
    return analyze_with(gw, record.sentence, record.record_id)


def _target_word(s: AnalyzedSentence, record: EvalRecord, role: str) -> int:
    """Word index of the record's role target; raises SkippedWord if the
    target does not land on a word."""
    target = record.target(role)
    span = s.word_at(target.char_start, target.char_end)
    if span is None:
        raise SkippedWord(f"target {role!r} at {target.char_start}:"
                          f"{target.char_end} not on a word boundary")
    return span.word_index


def _model_name(gw: GatewayBase) -> str:
    return gw.handshake().model_name


# --- CEC ------------------------------------------------------------------

def eval_cec_auc(records: Sequence[EvalRecord], gw: GatewayBase) -> EvalScore:
    """AUC for telling the causal excess construction from look-alike
    adjective phrases by the global affinity of "so"."""
    samples: list[ScoredSample] = []
    skips: dict[str, int] = {}
    for record in _sorted_records(records):
        try:
            s = _analyze(gw, record)
            value = _global_or_skip(gw, s, _target_word(s, record, "so"))
        except (SkippedWord, LengthError, OffsetMismatch) as exc:
            skips[type(exc).__name__] = skips.get(type(exc).__name__, 0) + 1
            continue
        label = POSITIVE if record.label == "CEC" else NEGATIVE
        samples.append(ScoredSample(score=value, label=label))
    value = 100.0 * roc_auc(samples)
    return EvalScore(model=_model_name(gw), eval_name="cec_auc", value=value,
                     n_used=len(samples), n_skipped=sum(skips.values()),
                     breakdown={"skips": skips,
                                "n_positive": sum(1 for x in samples if x.label == POSITIVE),
                                "n_negative": sum(1 for x in samples if x.label == NEGATIVE)})


def _global_or_skip(gw: GatewayBase, s: AnalyzedSentence, i: int) -> float:
    record = try_global(gw, s, i)
    if record.skipped is not None:
        raise SkippedWord(record.skipped)
    return record.value


def eval_multithat(records: Sequence[EvalRecord], gw: GatewayBase) -> EvalScore:
    """Fraction of multi-that items where "so" has its highest local
    affinity with the causal "that". Exact ties count as incorrect."""
    n_correct = 0
    n_used = 0
    skips: dict[str, int] = {}
    for record in _sorted_records(records):
        try:
            s = _analyze(gw, record)
            so_index = _target_word(s, record, "so")
            that_indices = []
            for start, end in record.meta["that_positions"]:
                span = s.word_at(start, end)
                if span is None:
                    raise SkippedWord(f"that at {start}:{end} not on a word boundary")
                that_indices.append(span.word_index)
            values = [local_affinity(gw, s, so_index, k) for k in that_indices]
        except (SkippedWord, LengthError, OffsetMismatch) as exc:
            skips[type(exc).__name__] = skips.get(type(exc).__name__, 0) + 1
            continue
        n_used += 1
        best = max(values)
        # a tie for the maximum is never credited
        if values.count(best) == 1 and values.index(best) == record.meta["causal_index"]:
            n_correct += 1
    if n_used == 0:
        raise EmptyFilter("no usable multi-that records")
    value = 100.0 * n_correct / n_used
    return EvalScore(model=_model_name(gw), eval_name="so_that", value=value,
                     n_used=n_used, n_skipped=sum(skips.values()),
                     breakdown={"skips": skips, "n_correct": n_correct})


# --- idioms -----------------------------------------------------------------

def eval_idioms(records: Sequence[EvalRecord], gw: GatewayBase,
                per_expression: bool = True) -> EvalScore:
    """AUC for literal vs figurative word usages by global affinity.

    Each labeled word is one sample (positive class: literal). The
    per-expression AUCs land in the breakdown; the headline number is
    always the pooled per-word AUC.
    """
    samples: list[tuple[str, ScoredSample]] = []
    skips: dict[str, int] = {}
    analyzed: dict[str, AnalyzedSentence] = {}
    for record in _sorted_records(records):
        try:
            s = analyzed.get(record.sentence)
            if s is None:
                s = _analyze(gw, record)
                analyzed[record.sentence] = s
            value = _global_or_skip(gw, s, _target_word(s, record, "word"))
        except (SkippedWord, LengthError, OffsetMismatch) as exc:
            skips[type(exc).__name__] = skips.get(type(exc).__name__, 0) + 1
            continue
        label = POSITIVE if record.label == "literal" else NEGATIVE
        samples.append((record.meta.get("expression", ""),
                        ScoredSample(score=value, label=label)))
    value = 100.0 * roc_auc([x for _, x in samples])
    breakdown: dict = {"skips": skips}
    if per_expression:
        by_expr: dict[str, list[ScoredSample]] = {}
        for expr, sample in samples:
            by_expr.setdefault(expr, []).append(sample)
        expr_auc = {}
        for expr, group in sorted(by_expr.items()):
            labels = {g.label for g in group}
            if len(labels) == 2:
                expr_auc[expr] = 100.0 * roc_auc(group)
        breakdown["per_expression_auc"] = expr_auc
    return EvalScore(model=_model_name(gw), eval_name="idioms_auc", value=value,
                     n_used=len(samples), n_skipped=sum(skips.values()),
                     breakdown=breakdown)


# --- fixed slots -------------------------------------------------------------

# Table columns pool the two comparative-correlative "the" slots into one class
FIXED_SLOT_EVALS: dict[str, tuple[str, tuple[str, ...]]] = {
    "fixed_much": ("much-less", ("much",)),
    "fixed_less": ("much-less", ("less",)),
    "fixed_let": ("let-alone", ("let",)),
    "fixed_alone": ("let-alone", ("alone",)),
    "fixed_at": ("conative", ("at",)),
    "fixed_way": ("way-manner", ("way",)),
    "fixed_with": ("causative-with", ("with",)),
    "fixed_the": ("comparative-correlative", ("the1", "the2")),
}


def eval_fixed_slots(records: Sequence[EvalRecord], gw: GatewayBase) -> list[EvalScore]:
    """Mean global affinity of each construction's fixed words, one score
    per table column; all slots pool (the two "the" slots are one class)."""
    by_construction: dict[str, list[EvalRecord]] = {}
    for record in _sorted_records(records):
        by_construction.setdefault(record.label, []).append(record)

    scores: list[EvalScore] = []
    for eval_name, (construction, roles) in FIXED_SLOT_EVALS.items():
        values: list[float] = []
        skips: dict[str, int] = {}
        for record in by_construction.get(construction, []):
            try:
                s = _analyze(gw, record)
            except (OffsetMismatch, LengthError) as exc:
                skips[type(exc).__name__] = skips.get(type(exc).__name__, 0) + len(roles)
                continue
            for role in roles:
                try:
                    values.append(_global_or_skip(gw, s, _target_word(s, record, role)))
                except (SkippedWord, LengthError) as exc:
                    skips[type(exc).__name__] = skips.get(type(exc).__name__, 0) + 1
        if not values:
            continue
        scores.append(EvalScore(
            model=_model_name(gw), eval_name=eval_name,
            value=100.0 * float(np.mean(values)),
            n_used=len(values), n_skipped=sum(skips.values()),
            breakdown={"construction": construction, "roles": list(roles),
                       "skips": skips}))
    return scores


# --- NPN ---------------------------------------------------------------------

NPN_FILTERS = ("all", "acceptable", "acceptable_unseen")
ACCEPTABILITY_FLOOR = 4


def npn_trigram_key(record: EvalRecord) -> tuple[str, str, str]:
    noun = record.meta["noun"].casefold()
    return (noun, record.meta["preposition"].casefold(), noun)


def eval_npn(records: Sequence[EvalRecord], gw: GatewayBase,
             which: str = "acceptable_unseen",
             counts: Mapping[tuple[str, str, str], int] | None = None,
             ) -> list[EvalScore]:
    """Mean global affinity over both noun slots, one score per preposition.

    Filters: all records; acceptability >= 4; additionally never seen in
    the reference training corpus (needs trigram counts).
    """
    if which not in NPN_FILTERS:
        raise ValueError(f"filter must be one of {NPN_FILTERS}, got {which!r}")
    if which == "acceptable_unseen" and counts is None:
        raise MissingCounts("acceptable_unseen filtering needs corpus trigram counts")

    def passes(record: EvalRecord) -> bool:
        if which == "all":
            return True
        if record.meta["acceptability"] < ACCEPTABILITY_FLOOR:
            return False
        if which == "acceptable_unseen":
            return counts.get(npn_trigram_key(record), 0) == 0
        return True

    by_prep: dict[str, list[EvalRecord]] = {}
    for record in _sorted_records(records):
        if passes(record):
            by_prep.setdefault(record.label, []).append(record)

    scores: list[EvalScore] = []
    for prep in sorted(by_prep):
        values: list[float] = []
        skips: dict[str, int] = {}
        for record in by_prep[prep]:
            try:
                s = _analyze(gw, record)
            except (OffsetMismatch, LengthError) as exc:
                skips[type(exc).__name__] = skips.get(type(exc).__name__, 0) + 2
                continue
            for role in ("noun1", "noun2"):
                try:
                    values.append(_global_or_skip(gw, s, _target_word(s, record, role)))
                except (SkippedWord, LengthError) as exc:
                    skips[type(exc).__name__] = skips.get(type(exc).__name__, 0) + 1
        if not values:
            raise EmptyFilter(f"filter {which!r} left no usable {prep!r} records")
        scores.append(EvalScore(
            model=_model_name(gw), eval_name=f"npn_{prep}",
            value=100.0 * float(np.mean(values)),
            n_used=len(values), n_skipped=sum(skips.values()),
            breakdown={"filter": which, "skips": skips,
                       "n_records": len(by_prep[prep])}))
    if not scores:
        raise EmptyFilter(f"filter {which!r} left no records at all")
    return scores


# --- comparative correlative, schematic slots ---------------------------------

CC_WEIGHTINGS = ("mass", "count")
PERCENTILE_BREAKDOWN = (0.5, 0.8)


def eval_cc_schematic(records: Sequence[EvalRecord], gw: GatewayBase,
                      tagger: TaggerPolicy = TaggerPolicy(),
                      q: float = 0.85, weighting: str = "mass") -> EvalScore:
    """How comparative the distribution over each CC schematic slot is.

    For every comparative slot: mask it, take the nucleus at mass q of the
    output distribution, substitute each nucleus token into the sentence,
    and score the comparative fraction of the nucleus, weighted by
    probability mass (default) or by count. Also reports how many words
    reach the 50th/80th percentile of the distribution, a direct read of
    the slot's entropy.
    """
    if weighting not in CC_WEIGHTINGS:
        raise ValueError(f"weighting must be one of {CC_WEIGHTINGS}, got {weighting!r}")
    cc_records = [r for r in records if r.label == "comparative-correlative"]

    slot_scores: list[float] = []
    percentile_words: dict[float, list[int]] = {p: [] for p in PERCENTILE_BREAKDOWN}
    skips: dict[str, int] = {}
    n_candidates = 0
    for record in _sorted_records(cc_records):
        try:
            s = _analyze(gw, record)
        except (OffsetMismatch, LengthError) as exc:
            n_candidates += 2
            skips[type(exc).__name__] = skips.get(type(exc).__name__, 0) + 2
            continue
        for role in ("cmp1", "cmp2"):
            n_candidates += 1
            try:
                word_index = _target_word(s, record, role)
                span = s.words[word_index]
                if not maskable(span):
                    raise SkippedWord(f"slot {role} is multi-token")
                position = span.token_start
                request = DistributionRequest(
                    request_id=f"{record.record_id}:{role}",
                    token_ids=s.token_ids, masked_positions=(position,))
                log_probs = gw.distributions(request).at(position)
            except (SkippedWord, LengthError) as exc:
                skips[type(exc).__name__] = skips.get(type(exc).__name__, 0) + 1
                continue
            probs = np.exp(log_probs)
            top = nucleus(probs, q)
            for p in PERCENTILE_BREAKDOWN:
                percentile_words[p].append(words_to_percentile(probs, p))

            slot = (span.core_start, span.core_end)
            want_tags = tagger.mode == "external"
            try:
                fills = gw.tag_fills(record.sentence, slot, top.token_ids,
                                     want_tags=want_tags)
            except TaggerUnavailable:
                if tagger.mode == "external":
                    raise
                fills = gw.tag_fills(record.sentence, slot, top.token_ids,
                                     want_tags=False)
            if tagger.mode == "external":
                comparative = [f.tag in COMPARATIVE_TAGS for f in fills]
            else:
                comparative = [is_comparative(f.surface,
                                              use_suffix_rule=tagger.use_suffix_rule)
                               for f in fills]
            if weighting == "mass":
                weights = np.array([p for _, p in top.entries])
                score = float(np.sum(weights[comparative]) / np.sum(weights))
            else:
                score = sum(comparative) / len(comparative)
            slot_scores.append(score)

    if not slot_scores:
        raise EmptyFilter("no usable comparative slots")
    breakdown = {
        "weighting": weighting, "q": q, "tagger_mode": tagger.mode,
        "skips": skips,
        "words_to_percentile": {
            str(p): float(np.mean(vals)) for p, vals in percentile_words.items()},
    }
    return EvalScore(model=_model_name(gw), eval_name="cc_adjadv",
                     value=100.0 * float(np.mean(slot_scores)),
                     n_used=len(slot_scores),
                     n_skipped=n_candidates - len(slot_scores),
                     breakdown=breakdown)


# --- benchmark correlation ------------------------------------------------------

@dataclass(frozen=True)
class CorrelationReport:
    mean_r: float
    sd_r: float
    per_column: dict[str, float]
    excluded: dict[str, str]
    n_models: int

    def to_dict(self) -> dict:
        return {"mean_r": self.mean_r, "sd_r": self.sd_r,
                "per_column": self.per_column, "excluded": self.excluded,
                "n_models": self.n_models}


def correlate_with_benchmark(table: Mapping[str, Mapping[str, float]],
                             benchmark: Mapping[str, float]) -> CorrelationReport:
    """Pearson r of every evaluation column against benchmark macro
    averages, over the models present in both; mean and sample SD across
    columns. Zero-variance columns are excluded with a reason.

    `table` maps model -> eval name -> score.
    """
    models = sorted(m for m in table if m in benchmark)
    if len(models) < 3:
        raise DegenerateVariance(f"need at least 3 shared models, got {len(models)}")
    columns = sorted({name for m in models for name in table[m]})
    y = [float(benchmark[m]) for m in models]

    per_column: dict[str, float] = {}
    excluded: dict[str, str] = {}
    for column in columns:
        missing = [m for m in models if column not in table[m]]
        if missing:
            excluded[column] = f"missing for {missing}"
            continue
        x = [float(table[m][column]) for m in models]
        try:
            per_column[column] = pearson(x, y)
        except DegenerateVariance as exc:
            excluded[column] = str(exc)
    if not per_column:
        raise DegenerateVariance("no usable columns")
    values = np.array(list(per_column.values()))
    sd = float(values.std(ddof=1)) if len(values) > 1 else 0.0
    return CorrelationReport(mean_r=float(values.mean()), sd_r=sd,
                             per_column=per_column, excluded=excluded,
                             n_models=len(models))
