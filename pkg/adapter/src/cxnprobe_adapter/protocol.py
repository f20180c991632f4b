"""Wire format of the gateway protocol, server side.

Frames are a 4-byte big-endian length followed by UTF-8 JSON serialized
with sorted keys, compact separators and ASCII escapes; every message
carries "v": 1, "type" and "request_id". Distribution vectors travel as
base64 little-endian float32. Errors are
{"type": "error", "request_id", "code", "message"} with codes
version | bad_request | encoding | length | tagger_unavailable | internal.

This module is self-contained on purpose: the protocol is the contract
between this server and any probing client, and nothing here may depend
on a particular client implementation.
"""

from __future__ import annotations

import base64
import json
import struct
from typing import Any, BinaryIO

import numpy as np

PROTOCOL_VERSION = 1

_LEN = struct.Struct(">I")


class ProtocolEOF(Exception):
    """Peer closed the stream."""


def encode_message(message: dict[str, Any]) -> bytes:
    payload = json.dumps(message, sort_keys=True, separators=(",", ":"),
                         ensure_ascii=True).encode("utf-8")
    return _LEN.pack(len(payload)) + payload


def write_message(stream: BinaryIO, message: dict[str, Any]) -> None:
    stream.write(encode_message(message))
    stream.flush()


def read_message(stream: BinaryIO) -> dict[str, Any]:
    header = stream.read(4)
    if not header:
        raise ProtocolEOF
    if len(header) < 4:
        raise ValueError("truncated frame header")
    (size,) = _LEN.unpack(header)
    payload = b""
    while len(payload) < size:
        chunk = stream.read(size - len(payload))
        if not chunk:
            raise ValueError("stream closed mid-frame")
        payload += chunk
    message = json.loads(payload.decode("utf-8"))
    if not isinstance(message, dict):
        raise ValueError("frame is not a JSON object")
    return message


def encode_vector(log_probs: np.ndarray) -> str:
    return base64.b64encode(
        np.asarray(log_probs, dtype="<f4").tobytes()).decode("ascii")


def error_message(request_id: str, code: str, text: str) -> dict[str, Any]:
    return {"v": PROTOCOL_VERSION, "type": "error",
            "request_id": request_id, "code": code, "message": text}
