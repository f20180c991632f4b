"""POS tagging for the pos_tag message.

The spaCy tagger substitutes each candidate fill into the full sentence
and tags the whole thing, returning the tag at the substituted position;
a crude offline rule tagger (irregular comparatives plus a bare -er
suffix check) can be selected explicitly with --tagger rule for runs
where spaCy or its model is unavailable. Score reproduction should always
use the spaCy path.
"""

from __future__ import annotations

from typing import Optional

_IRREGULAR_COMPARATIVES = {
    "more", "less", "better", "worse", "fewer", "further",
    "farther", "later", "elder", "lesser",
}


class TaggerUnavailableError(RuntimeError):
    pass


class RuleTagger:
    """Deliberately crude: JJR for anything irregular or -er; offline use only."""

    name = "rule"

    def tag_words(self, text: str) -> list[tuple[str, str]]:
        out = []
        for word in text.split():
            core = word.strip("\"'`.,;:!?()[]").casefold()
            comparative = (core in _IRREGULAR_COMPARATIVES
                           or (len(core) > 3 and core.endswith("er")))
            out.append((word, "JJR" if comparative else "X"))
        return out

    def tag_at(self, text: str, char_start: int) -> str:
        position = 0
        for word, tag in self.tag_words(text):
            position = text.index(word, position)
            if position <= char_start < position + len(word):
                return tag
            position += len(word)
        return "X"


class SpacyTagger:
    name = "spacy"

    def __init__(self, model: str = "en_core_web_sm"):
        try:
            import spacy
        except ImportError as exc:
            raise TaggerUnavailableError(f"spaCy not installed: {exc}") from exc
        try:
            self.nlp = spacy.load(model, exclude=["ner", "lemmatizer", "parser"])
        except OSError as exc:
            raise TaggerUnavailableError(
                f"spaCy model {model!r} not available: {exc}") from exc

    def tag_words(self, text: str) -> list[tuple[str, str]]:
        doc = self.nlp(text)
        words: list[tuple[str, str]] = []
        position = 0
        for word in text.split():
            start = text.index(word, position)
            end = start + len(word)
            position = end
            tags = [t.tag_ for t in doc
                    if t.idx < end and t.idx + len(t.text) > start]
            # a comparative anywhere in the chunk decides it
            tag = next((t for t in tags if t in ("JJR", "RBR")),
                       tags[0] if tags else "X")
            words.append((word, tag))
        return words

    def tag_at(self, text: str, char_start: int) -> str:
        doc = self.nlp(text)
        for token in doc:
            if token.idx <= char_start < token.idx + len(token.text):
                return token.tag_
        return "X"


def load_tagger(kind: str, model: str):
    """kind: spacy | rule | none."""
    if kind == "none":
        return None
    if kind == "rule":
        return RuleTagger()
    if kind == "spacy":
        return SpacyTagger(model)
    raise ValueError(f"unknown tagger {kind!r}")
