"""Exception types shared across the toolkit.

Everything derives from CxnProbeError so callers can catch broadly; the
narrow classes exist because evaluations need to distinguish "skip this
item and account for it" (SkippedWord, LengthError) from hard failures.
"""

from __future__ import annotations


class CxnProbeError(Exception):
    """Base class for all toolkit errors."""


# --- alignment / core ---

class OffsetMismatch(CxnProbeError):
    """A word's characters are not fully covered by token offsets.

    Signals tokenizer/text disagreement; the caller must drop the sentence.
    """


# --- gateway / transport ---

class TransportError(CxnProbeError):
    """Gateway peer unreachable, dead, or speaking the wrong protocol version."""


class EncodingError(CxnProbeError):
    """Text the model cannot encode (e.g. empty input)."""


class LengthError(CxnProbeError):
    """Token sequence exceeds the model's maximum length; callers record a skip."""


class TaggerUnavailable(CxnProbeError):
    """Gateway cannot serve POS tags; callers may fall back to the rule tagger."""


# --- affinity ---

class SkippedWord(CxnProbeError):
    """Target word cannot be masked (multi-token or out of vocabulary)."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


# --- stats ---

class DimensionMismatch(CxnProbeError):
    """Two distributions with different vocabulary sizes."""


class DegenerateLabels(CxnProbeError):
    """ROC AUC needs at least one positive and one negative sample."""


class DegenerateVariance(CxnProbeError):
    """Pearson correlation is undefined when either input has zero variance."""


# --- datasets ---

class SchemaError(CxnProbeError):
    """A malformed dataset line. Collected per line, not fatal to the load."""


class UnknownConstruction(SchemaError):
    """Construction label outside the closed set."""


class MissingTarget(SchemaError):
    """Record lacks a required target word."""


class FormViolation(SchemaError):
    """Sentence does not contain the required noun+preposition+noun trigram."""


class EndpointError(CxnProbeError):
    """Completion endpoint failure (network, auth, bad response)."""


# --- evals ---

class MissingCounts(CxnProbeError):
    """Frequency-filtered evaluation requested without corpus counts."""


class EmptyFilter(CxnProbeError):
    """A filter removed every record; a mean over nothing is not a score."""
