"""cxnprobe: how grammatical constructions constrain a masked LM's output.

Quantifies constructional constraints through two affinity measures over
full output distributions, runs the construction evaluations behind a
model-agnostic gateway, and scans training corpora for n-gram frequencies
and constructional usage.
"""

__version__ = "0.1.0"

from .core import (AffinityRecord, AnalyzedSentence, Distribution, WordSpan,
                   align_words, analyze, maskable)
from .errors import CxnProbeError

__all__ = [
    "AffinityRecord",
    "AnalyzedSentence",
    "CxnProbeError",
    "Distribution",
    "WordSpan",
    "align_words",
    "analyze",
    "maskable",
    "__version__",
]
