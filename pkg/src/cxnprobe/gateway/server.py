"""Protocol server: exposes any GatewayBase over a byte-stream pair.

Used to put the mock behind a real wire for client tests, and runnable as
a process (`python -m cxnprobe.gateway.server --seed 7 --listen stdio`)
for spawn-mode runs. Malformed requests get error replies; the loop never
crashes on bad input.
"""

from __future__ import annotations

import argparse
import socket
import sys
from typing import Any, BinaryIO

from ..errors import (CxnProbeError, EncodingError, LengthError,
                      TaggerUnavailable)
from . import protocol
from .mock import MockGateway
from .types import DistributionRequest, GatewayBase


def _error_code(exc: Exception) -> str:
    if isinstance(exc, EncodingError):
        return "encoding"
    if isinstance(exc, LengthError):
        return "length"
    if isinstance(exc, TaggerUnavailable):
        return "tagger_unavailable"
    if isinstance(exc, (ValueError, KeyError, TypeError)):
        return "bad_request"
    return "internal"


def handle_message(backend: GatewayBase, message: dict[str, Any]) -> dict[str, Any]:
    request_id = str(message.get("request_id", ""))
    if message.get("v") != protocol.PROTOCOL_VERSION:
        return protocol.error_message(request_id, "version",
                                      f"unsupported protocol version {message.get('v')!r}")
    kind = message.get("type")
    try:
        if kind == "handshake":
            info = backend.handshake()
            return {"v": 1, "type": "handshake", "request_id": request_id,
                    "model_name": info.model_name, "vocab_size": info.vocab_size,
                    "mask_token_id": info.mask_token_id,
                    "max_positions": info.max_positions}
        if kind == "tokenize":
            tokens = backend.tokenize(str(message["text"]))
            return {"v": 1, "type": "tokenize", "request_id": request_id,
                    "tokens": [[t, s, e] for t, s, e in tokens]}
        if kind == "distributions":
            request = DistributionRequest(
                request_id=request_id,
                token_ids=tuple(int(t) for t in message["token_ids"]),
                masked_positions=tuple(int(p) for p in message["masked_positions"]),
            )
            response = backend.distributions(request)
            return {"v": 1, "type": "distributions", "request_id": request_id,
                    "per_position": {str(p): protocol.encode_vector(v)
                                     for p, v in response.per_position.items()}}
        if kind == "pos_tag":
            text = str(message["text"])
            if "fills" in message:
                fills = backend.tag_fills(
                    text,
                    slot=(int(message["slot"][0]), int(message["slot"][1])),
                    fills=[int(f) for f in message["fills"]],
                    want_tags=bool(message.get("want_tags", True)),
                )
                return {"v": 1, "type": "pos_tag", "request_id": request_id,
                        "fills": [[f.token_id, f.surface, f.tag] for f in fills]}
            tags = backend.pos_tag(text)
            return {"v": 1, "type": "pos_tag", "request_id": request_id,
                    "tags": [[w, t] for w, t in tags]}
        return protocol.error_message(request_id, "bad_request",
                                      f"unknown message type {kind!r}")
    except (CxnProbeError, ValueError, KeyError, TypeError) as exc:
        return protocol.error_message(request_id, _error_code(exc), str(exc))


def serve(backend: GatewayBase, rfile: BinaryIO, wfile: BinaryIO) -> None:
    """Answer frames until EOF."""
    while True:
        try:
            message = protocol.read_message(rfile)
        except CxnProbeError:
            return  # peer gone or stream corrupt; nothing sensible to answer
        if message is None:
            return
        protocol.write_message(wfile, handle_message(backend, message))


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        description="Serve the deterministic mock gateway over stdio or TCP.")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--listen", default="stdio",
                        help="stdio or tcp:<port> (bound to localhost)")
    args = parser.parse_args(argv)

    backend = MockGateway(seed=args.seed)
    if args.listen == "stdio":
        serve(backend, sys.stdin.buffer, sys.stdout.buffer)
        return 0
    if args.listen.startswith("tcp:"):
        port = int(args.listen.split(":", 1)[1])
        with socket.create_server(("127.0.0.1", port)) as sock:
            conn, _ = sock.accept()
            with conn, conn.makefile("rb") as rfile, conn.makefile("wb") as wfile:
                serve(backend, rfile, wfile)
        return 0
    parser.error(f"unsupported --listen {args.listen!r}")
    return 2


if __name__ == "__main__":
    raise SystemExit(main())
