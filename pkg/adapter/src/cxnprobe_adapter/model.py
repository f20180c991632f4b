"""Masked-LM backend: tokenization with offsets and full log-softmax
distributions at masked positions.

The wire tokenization carries no special tokens (every token must map to
characters of the request text); the model's own specials are wrapped
around the sequence at inference time and positions shifted accordingly,
so the caller's position space is always the visible token sequence.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
from transformers import AutoModelForMaskedLM, AutoTokenizer


class EncodingFailure(ValueError):
    """Text the tokenizer cannot turn into aligned tokens."""


class LengthFailure(ValueError):
    """Sequence longer than the model can attend to."""


@dataclass(frozen=True)
class ModelDescription:
    model_name: str
    vocab_size: int
    mask_token_id: int
    max_positions: int


class MaskedLM:
    def __init__(self, model_ref: str, device: str = "cpu",
                 trust_remote_code: bool = False, revision: str | None = None):
        self.model_ref = model_ref
        self.device = torch.device(device)
        self.tokenizer = AutoTokenizer.from_pretrained(
            model_ref, trust_remote_code=trust_remote_code, revision=revision)
        if not self.tokenizer.is_fast:
            raise ValueError(f"{model_ref}: a fast tokenizer (with character "
                             f"offsets) is required")
        if self.tokenizer.mask_token_id is None:
            raise ValueError(f"{model_ref}: tokenizer has no mask token; "
                             f"not a masked LM")
        self.model = AutoModelForMaskedLM.from_pretrained(
            model_ref, trust_remote_code=trust_remote_code, revision=revision)
        self.model.to(self.device)
        self.model.eval()  # no dropout: identical requests, identical answers

        # the wire sequence excludes special tokens; they are wrapped back
        # around at inference time. Probe a real encoding to learn the
        # prefix/suffix ids (robust across tokenizer API versions).
        self._prefix_ids, self._suffix_ids = self._probe_specials()
        n_specials = len(self._prefix_ids) + len(self._suffix_ids)
        model_max = getattr(self.model.config, "max_position_embeddings", 512)
        tokenizer_max = self.tokenizer.model_max_length
        if tokenizer_max and tokenizer_max < 1 << 20:
            model_max = min(model_max, tokenizer_max)
        self.description = ModelDescription(
            model_name=model_ref,
            vocab_size=int(self.model.config.vocab_size),
            mask_token_id=int(self.tokenizer.mask_token_id),
            max_positions=int(model_max - n_specials),
        )

    def _probe_specials(self) -> tuple[list[int], list[int]]:
        for probe in ("a", "the", "x", "1", "."):
            bare = self.tokenizer(probe, add_special_tokens=False)["input_ids"]
            if bare:
                break
        else:
            raise ValueError("cannot probe the tokenizer's special tokens")
        wrapped = self.tokenizer(probe, add_special_tokens=True)["input_ids"]
        for start in range(len(wrapped) - len(bare) + 1):
            if wrapped[start:start + len(bare)] == bare:
                return list(wrapped[:start]), list(wrapped[start + len(bare):])
        raise ValueError("special-token layout not recognized")

    def tokenize(self, text: str) -> list[tuple[int, int, int]]:
        if not text or not text.strip():
            raise EncodingFailure("empty text")
        encoded = self.tokenizer(text, add_special_tokens=False,
                                 return_offsets_mapping=True)
        tokens = [
            (int(token_id), int(start), int(end))
            for token_id, (start, end) in zip(encoded["input_ids"],
                                              encoded["offset_mapping"])
            if end > start
        ]
        if not tokens:
            raise EncodingFailure("no encodable content")
        return tokens

    @torch.no_grad()
    def distributions(self, token_ids: Sequence[int],
                      masked_positions: Sequence[int]) -> dict[int, np.ndarray]:
        if len(token_ids) > self.description.max_positions:
            raise LengthFailure(
                f"{len(token_ids)} tokens exceeds "
                f"max_positions={self.description.max_positions}")
        sequence = list(token_ids)
        for position in masked_positions:
            sequence[position] = self.description.mask_token_id
        with_specials = self._prefix_ids + sequence + self._suffix_ids
        input_ids = torch.tensor([with_specials], device=self.device)
        logits = self.model(input_ids=input_ids).logits[0]
        prefix = len(self._prefix_ids)
        out: dict[int, np.ndarray] = {}
        for position in masked_positions:
            row = logits[position + prefix]
            log_probs = torch.log_softmax(row.double(), dim=-1)
            out[position] = log_probs.cpu().numpy()
        return out

    def surface(self, token_id: int) -> str:
        """Surface form of one vocabulary entry, as it would be substituted
        into running text."""
        return self.tokenizer.decode([token_id]).strip()
