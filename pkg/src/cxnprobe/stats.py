"""Statistical kernels: JSD, ROC/AUC, Pearson r, nucleus extraction.

All reductions run in double precision regardless of how the inputs
arrived (wire vectors are single precision); AUC over ~100k samples is
not stable in float32.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .core import Distribution
from .errors import DegenerateLabels, DegenerateVariance, DimensionMismatch

ArrayLike = Union[Distribution, np.ndarray, Sequence[float]]

POSITIVE = "positive"
NEGATIVE = "negative"


@dataclass(frozen=True)
class ScoredSample:
    score: float
    label: str  # POSITIVE | NEGATIVE

    def __post_init__(self):
        if self.label not in (POSITIVE, NEGATIVE):
            raise ValueError(f"label must be positive/negative, got {self.label!r}")
        if not np.isfinite(self.score):
            raise ValueError("score must be finite")


@dataclass(frozen=True)
class Nucleus:
    """Minimal set of highest-probability tokens whose mass reaches q."""

    entries: tuple[tuple[int, float], ...]  # (token_id, prob), prob descending
    mass: float
    q: float

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def token_ids(self) -> list[int]:
        return [t for t, _ in self.entries]


def _probs(d: ArrayLike) -> np.ndarray:
    if isinstance(d, Distribution):
        return d.probs
    return np.asarray(d, dtype=np.float64)


def jsd(p: ArrayLike, q: ArrayLike) -> float:
    """Jensen-Shannon divergence, log base 2, so the result lies in [0, 1].

    0.5*KL(p||m) + 0.5*KL(q||m) with m = (p+q)/2 and the convention
    0*log(0/m) = 0. Terms with p > 0 always have m > 0 since m >= p/2.
    """
    pv, qv = _probs(p), _probs(q)
    if pv.shape != qv.shape:
        raise DimensionMismatch(f"vectors of length {pv.shape} vs {qv.shape}")
    m = 0.5 * (pv + qv)
    left = pv > 0.0
    right = qv > 0.0
    kl_pm = float(np.sum(pv[left] * np.log2(pv[left] / m[left])))
    kl_qm = float(np.sum(qv[right] * np.log2(qv[right] / m[right])))
    return 0.5 * kl_pm + 0.5 * kl_qm


def roc_auc(samples: Sequence[ScoredSample]) -> float:
    """Mann-Whitney AUC: P(positive score > negative score) with ties at 0.5.

    Computed through tied ranks; equal to brute-force pair enumeration
    exactly, including the division, because tied ranks are half-integers.
    """
    scores = np.array([s.score for s in samples], dtype=np.float64)
    pos = np.array([s.label == POSITIVE for s in samples], dtype=bool)
    n_pos = int(pos.sum())
    n_neg = len(samples) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabels(f"need both classes, got {n_pos} positive / {n_neg} negative")

    order = np.argsort(scores, kind="stable")
    ranks = np.empty(len(scores), dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < len(sorted_scores):
        j = i
        while j + 1 < len(sorted_scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j + 2) / 2.0  # average 1-based rank
        i = j + 1

    u = float(ranks[pos].sum()) - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Sample Pearson correlation."""
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    if xa.shape != ya.shape:
        raise DimensionMismatch(f"lengths {xa.shape} vs {ya.shape}")
    if len(xa) < 3:
        raise DegenerateVariance(f"need at least 3 points, got {len(xa)}")
    xc = xa - xa.mean()
    yc = ya - ya.mean()
    sx = float(xc @ xc)
    sy = float(yc @ yc)
    if sx == 0.0 or sy == 0.0:
        raise DegenerateVariance("zero variance input")
    r = float(xc @ yc) / np.sqrt(sx * sy)
    return float(min(1.0, max(-1.0, r)))


def nucleus(d: ArrayLike, q: float) -> Nucleus:
    """Minimal descending-probability prefix with mass >= q.

    Ties between equal probabilities break by ascending token id for
    reproducibility. Zero-probability tokens never enter, so q = 1 returns
    exactly the support (when rounding leaves the total slightly below 1,
    the whole support is still the answer).
    """
    if not 0.0 < q <= 1.0:
        raise ValueError(f"q must be in (0, 1], got {q}")
    pv = _probs(d)
    ids = np.arange(len(pv))
    order = np.lexsort((ids, -pv))
    ordered = pv[order]
    positive = ordered > 0.0
    order, ordered = order[positive], ordered[positive]
    cum = np.cumsum(ordered)
    reached = np.nonzero(cum >= q)[0]
    k = int(reached[0]) + 1 if len(reached) else len(ordered)
    entries = tuple((int(order[i]), float(ordered[i])) for i in range(k))
    return Nucleus(entries=entries, mass=float(cum[k - 1]) if k else 0.0, q=q)


def words_to_percentile(d: ArrayLike, q: float) -> int:
    """How many top-probability tokens are needed to reach mass q."""
    return len(nucleus(d, q))
