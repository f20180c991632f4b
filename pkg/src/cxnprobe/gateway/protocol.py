"""Wire protocol: length-prefixed JSON frames over a byte stream.

Normative encoding, shared by every client and server speaking to this
toolkit (the protocol is language-neutral; nothing below assumes the peer
is Python):

  frame    := length payload
  length   := 4-byte big-endian unsigned payload size
  payload  := UTF-8 JSON, serialized with sorted keys, separators
              ("," and ":") and ASCII-only escapes, so a given message
              has exactly one byte representation

Every message carries "v": 1 (protocol version), "type" and "request_id".
Character offsets in tokenize payloads are Unicode code-point offsets
into the request text.

Request types and their response fields:

  handshake      {}                      -> model_name, vocab_size,
                                            mask_token_id, max_positions
  tokenize       {text}                  -> tokens: [[id, start, end], ...]
  distributions  {token_ids,             -> per_position: {"<pos>": <vec>}
                  masked_positions}         with <vec> a base64 string of
                                            little-endian float32 log-probs
                                            (full vocabulary, never top-k)
  pos_tag        {text}                  -> tags: [[word, tag], ...]
  pos_tag        {text, slot: [s, e],    -> fills: [[id, surface, tag], ...]
                  fills: [id, ...],         tag is null unless want_tags;
                  want_tags: bool}          the peer substitutes each fill
                                            at slot before tagging

Errors: {"type": "error", "request_id", "code", "message"} with codes
  version | bad_request | encoding | length | tagger_unavailable | internal
"""

from __future__ import annotations

import base64
import json
import struct
from typing import Any, BinaryIO

import numpy as np

from ..errors import (EncodingError, LengthError, TaggerUnavailable,
                      TransportError)

PROTOCOL_VERSION = 1

_LEN = struct.Struct(">I")

ERROR_CODES = ("version", "bad_request", "encoding", "length",
               "tagger_unavailable", "internal")

_CODE_TO_ERROR = {
    "encoding": EncodingError,
    "length": LengthError,
    "tagger_unavailable": TaggerUnavailable,
}


def encode_message(message: dict[str, Any]) -> bytes:
    payload = json.dumps(message, sort_keys=True, separators=(",", ":"),
                         ensure_ascii=True).encode("utf-8")
    return _LEN.pack(len(payload)) + payload


def write_message(stream: BinaryIO, message: dict[str, Any]) -> None:
    stream.write(encode_message(message))
    stream.flush()


def read_message(stream: BinaryIO) -> dict[str, Any] | None:
    """Next frame from the stream, or None at clean EOF."""
    header = stream.read(4)
    if not header:
        return None
    if len(header) < 4:
        raise TransportError("truncated frame header")
    (size,) = _LEN.unpack(header)
    payload = b""
    while len(payload) < size:
        chunk = stream.read(size - len(payload))
        if not chunk:
            raise TransportError("stream closed mid-frame")
        payload += chunk
    try:
        message = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise TransportError(f"undecodable frame: {exc}") from exc
    if not isinstance(message, dict):
        raise TransportError("frame is not a JSON object")
    return message


def encode_vector(log_probs: np.ndarray) -> str:
    """Log-prob vector to base64 of little-endian float32."""
    arr = np.asarray(log_probs, dtype="<f4")
    return base64.b64encode(arr.tobytes()).decode("ascii")


def decode_vector(data: str) -> np.ndarray:
    """Base64 float32 payload back to a float64 vector."""
    raw = base64.b64decode(data.encode("ascii"))
    return np.frombuffer(raw, dtype="<f4").astype(np.float64)


def error_message(request_id: str, code: str, text: str) -> dict[str, Any]:
    assert code in ERROR_CODES, code
    return {"v": PROTOCOL_VERSION, "type": "error",
            "request_id": request_id, "code": code, "message": text}


def raise_for_error(message: dict[str, Any]) -> None:
    """Map a protocol error message onto the toolkit's exceptions."""
    if message.get("type") != "error":
        return
    code = message.get("code", "internal")
    text = message.get("message", "")
    exc = _CODE_TO_ERROR.get(code, TransportError)
    raise exc(f"{code}: {text}")


def check_version(message: dict[str, Any]) -> None:
    if message.get("v") != PROTOCOL_VERSION:
        raise TransportError(
            f"protocol version mismatch: got {message.get('v')!r}, "
            f"expected {PROTOCOL_VERSION}"
        )
