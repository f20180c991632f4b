"""Rule-based comparative tagger.

Offline fallback for deciding whether a word is a comparative adjective
or adverb: either it is one of the irregular comparatives, or it ends in
"-er" and its stem is in the bundled adjective/adverb wordlist. Meant for
fully offline runs and the mock gateway; score reproduction against an
external tagger should use the gateway's pos_tag instead.

Tag set: "JJR" (comparative adjective), "RBR" (comparative adverb),
"X" (anything else).
"""

from __future__ import annotations

from functools import lru_cache
from importlib import resources

IRREGULAR_COMPARATIVES = frozenset({
    "more", "less", "better", "worse", "fewer", "further",
    "farther", "later", "elder", "lesser",
})

# irregulars conventionally tagged as adverbs by this tagger
_ADVERBIAL = frozenset({"more", "less", "further", "farther", "sooner"})

COMPARATIVE_TAGS = frozenset({"JJR", "RBR"})


@lru_cache(maxsize=1)
def comparative_stems() -> frozenset[str]:
    """Base adjectives/adverbs whose -er form counts as comparative."""
    text = resources.files("cxnprobe.data").joinpath("comparative_stems.txt").read_text("utf-8")
    return frozenset(
        line.strip() for line in text.splitlines()
        if line.strip() and not line.startswith("#")
    )


def _stem_candidates(word: str) -> set[str]:
    # undo -er attachment: talle*r*, larg(e)+er, bigg+er, happi(y)+er
    base = word[:-2]
    cands = {base, base + "e"}
    if len(base) >= 2 and base[-1] == base[-2]:
        cands.add(base[:-1])
    if base.endswith("i"):
        cands.add(base[:-1] + "y")
    return cands


def is_comparative(word: str, use_suffix_rule: bool = True,
                   lexicon: frozenset[str] | None = None) -> bool:
    w = word.casefold()
    if w in (lexicon if lexicon is not None else IRREGULAR_COMPARATIVES):
        return True
    if not use_suffix_rule:
        return False
    if len(w) <= 3 or not w.endswith("er"):
        return False
    return bool(_stem_candidates(w) & comparative_stems())


def rule_tag(word: str) -> str:
    """Deterministic tag for one word: JJR, RBR, or X."""
    w = word.casefold()
    if not is_comparative(w):
        return "X"
    return "RBR" if w in _ADVERBIAL else "JJR"
