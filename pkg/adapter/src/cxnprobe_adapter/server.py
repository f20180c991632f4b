"""Request loop: answers gateway-protocol frames until EOF.

Every failure becomes a protocol error message; nothing a peer sends can
crash the loop. Distributions are computed with all requested positions
masked simultaneously and returned as full-vocabulary float32 log-prob
vectors.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, BinaryIO, Optional

from . import protocol
from .model import EncodingFailure, LengthFailure, MaskedLM
from .tagger import TaggerUnavailableError


@dataclass(frozen=True)
class AdapterConfig:
    model_ref: str
    device: str = "cpu"
    tagger: str = "spacy"  # spacy | rule | none
    tagger_model: str = "en_core_web_sm"
    batch_size: int = 1
    trust_remote_code: bool = False
    revision: Optional[str] = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


class AdapterServer:
    def __init__(self, config: AdapterConfig):
        self.config = config
        self.backend = MaskedLM(config.model_ref, device=config.device,
                                trust_remote_code=config.trust_remote_code,
                                revision=config.revision)
        self._tagger = None
        self._tagger_error: Optional[str] = None
        if config.tagger != "none":
            try:
                from .tagger import load_tagger
                self._tagger = load_tagger(config.tagger, config.tagger_model)
            except TaggerUnavailableError as exc:
                self._tagger_error = str(exc)

    # -- message handling ---------------------------------------------------

    def handle(self, message: dict[str, Any]) -> dict[str, Any]:
        request_id = str(message.get("request_id", ""))
        if message.get("v") != protocol.PROTOCOL_VERSION:
            return protocol.error_message(
                request_id, "version",
                f"unsupported protocol version {message.get('v')!r}")
        kind = message.get("type")
        try:
            if kind == "handshake":
                return self._handshake(request_id)
            if kind == "tokenize":
                return self._tokenize(request_id, message)
            if kind == "distributions":
                return self._distributions(request_id, message)
            if kind == "pos_tag":
                return self._pos_tag(request_id, message)
            return protocol.error_message(request_id, "bad_request",
                                          f"unknown message type {kind!r}")
        except EncodingFailure as exc:
            return protocol.error_message(request_id, "encoding", str(exc))
        except LengthFailure as exc:
            return protocol.error_message(request_id, "length", str(exc))
        except TaggerUnavailableError as exc:
            return protocol.error_message(request_id, "tagger_unavailable", str(exc))
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            return protocol.error_message(request_id, "bad_request",
                                          f"{type(exc).__name__}: {exc}")
        except Exception as exc:  # the loop must survive anything
            return protocol.error_message(request_id, "internal",
                                          f"{type(exc).__name__}: {exc}")

    def _handshake(self, request_id: str) -> dict[str, Any]:
        info = self.backend.description
        return {"v": 1, "type": "handshake", "request_id": request_id,
                "model_name": info.model_name, "vocab_size": info.vocab_size,
                "mask_token_id": info.mask_token_id,
                "max_positions": info.max_positions}

    def _tokenize(self, request_id: str, message: dict[str, Any]) -> dict[str, Any]:
        tokens = self.backend.tokenize(str(message["text"]))
        return {"v": 1, "type": "tokenize", "request_id": request_id,
                "tokens": [[t, s, e] for t, s, e in tokens]}

    def _distributions(self, request_id: str, message: dict[str, Any]) -> dict[str, Any]:
        token_ids = [int(t) for t in message["token_ids"]]
        masked = [int(p) for p in message["masked_positions"]]
        if len(set(masked)) != len(masked):
            raise ValueError("masked_positions must be distinct")
        for position in masked:
            if not 0 <= position < len(token_ids):
                raise ValueError(f"masked position {position} out of bounds")
        vocab = self.backend.description.vocab_size
        for token in token_ids:
            if not 0 <= token < vocab:
                raise ValueError(f"token id {token} out of vocabulary")
        per_position = self.backend.distributions(token_ids, masked)
        return {"v": 1, "type": "distributions", "request_id": request_id,
                "per_position": {str(p): protocol.encode_vector(v)
                                 for p, v in per_position.items()}}

    def _require_tagger(self):
        if self._tagger is None:
            raise TaggerUnavailableError(self._tagger_error
                                         or "no tagger configured")
        return self._tagger

    def _pos_tag(self, request_id: str, message: dict[str, Any]) -> dict[str, Any]:
        text = str(message["text"])
        if not text.strip():
            raise EncodingFailure("empty text")
        if "fills" in message:
            start, end = (int(message["slot"][0]), int(message["slot"][1]))
            if not 0 <= start < end <= len(text):
                raise ValueError(f"slot {[start, end]} out of bounds")
            want_tags = bool(message.get("want_tags", True))
            tagger = self._require_tagger() if want_tags else None
            fills = []
            for fill in (int(f) for f in message["fills"]):
                surface = self.backend.surface(fill)
                tag = None
                if want_tags:
                    # substitute into the original sentence, tag in context
                    substituted = text[:start] + surface + text[end:]
                    tag = tagger.tag_at(substituted, start) if surface else "X"
                fills.append([fill, surface, tag])
            return {"v": 1, "type": "pos_tag", "request_id": request_id,
                    "fills": fills}
        tags = self._require_tagger().tag_words(text)
        return {"v": 1, "type": "pos_tag", "request_id": request_id,
                "tags": [[w, t] for w, t in tags]}

    # -- loop ---------------------------------------------------------------

    def serve(self, rfile: BinaryIO, wfile: BinaryIO) -> None:
        while True:
            try:
                message = protocol.read_message(rfile)
            except protocol.ProtocolEOF:
                return
            except ValueError:
                return  # stream corrupt; no request id to answer to
            protocol.write_message(wfile, self.handle(message))
