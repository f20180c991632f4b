"""Protocol client: speaks the wire format to a spawned or remote adapter.

Requests are tagged with fresh request ids; the peer may answer out of
order and the client reorders, so several distribution requests can be
pipelined (`distributions_many`) without changing any result.
"""

from __future__ import annotations

import shlex
import socket
import subprocess
import threading
from typing import Any, BinaryIO, Sequence

from ..core import Token
from ..errors import TransportError
from . import protocol
from .types import (DistributionRequest, DistributionResponse, FillTag,
                    GatewayBase, ModelInfo)


class ProtocolGateway(GatewayBase):
    """Gateway over an established byte-stream pair."""

    def __init__(self, rfile: BinaryIO, wfile: BinaryIO):
        self._rfile = rfile
        self._wfile = wfile
        self._lock = threading.Lock()
        self._next_id = 0
        self._parked: dict[str, dict[str, Any]] = {}
        self._info: ModelInfo | None = None

    # -- plumbing ---------------------------------------------------------

    def _send(self, fields: dict[str, Any]) -> str:
        """Assign a request id and write the frame; returns the id."""
        self._next_id += 1
        request_id = f"r{self._next_id}"
        message = {"v": protocol.PROTOCOL_VERSION, "request_id": request_id}
        message.update(fields)
        try:
            protocol.write_message(self._wfile, message)
        except (BrokenPipeError, OSError) as exc:
            raise TransportError(f"peer unreachable: {exc}") from exc
        return request_id

    def _receive(self, request_id: str) -> dict[str, Any]:
        """Response for request_id, parking out-of-order arrivals."""
        if request_id in self._parked:
            return self._parked.pop(request_id)
        while True:
            message = protocol.read_message(self._rfile)
            if message is None:
                raise TransportError("peer closed the stream")
            protocol.check_version(message)
            got = str(message.get("request_id", ""))
            if got == request_id:
                return message
            self._parked[got] = message

    def _call(self, fields: dict[str, Any]) -> dict[str, Any]:
        with self._lock:
            response = self._receive(self._send(fields))
        protocol.raise_for_error(response)
        return response

    # -- gateway interface ------------------------------------------------

    def handshake(self) -> ModelInfo:
        if self._info is None:
            response = self._call({"type": "handshake"})
            self._info = ModelInfo(
                model_name=str(response["model_name"]),
                vocab_size=int(response["vocab_size"]),
                mask_token_id=int(response["mask_token_id"]),
                max_positions=int(response["max_positions"]),
            )
        return self._info

    def tokenize(self, text: str) -> list[Token]:
        response = self._call({"type": "tokenize", "text": text})
        return [(int(t), int(s), int(e)) for t, s, e in response["tokens"]]

    def distributions(self, request: DistributionRequest) -> DistributionResponse:
        return self.distributions_many([request])[0]

    def distributions_many(self, requests: Sequence[DistributionRequest]) -> list[DistributionResponse]:
        if not requests:
            return []
        with self._lock:
            wire_ids = [
                self._send({"type": "distributions",
                            "token_ids": list(request.token_ids),
                            "masked_positions": list(request.masked_positions)})
                for request in requests
            ]
            raw = [self._receive(wire_id) for wire_id in wire_ids]
        responses = []
        for request, message in zip(requests, raw):
            protocol.raise_for_error(message)
            responses.append(DistributionResponse(
                request_id=request.request_id,
                per_position={int(p): protocol.decode_vector(v)
                              for p, v in message["per_position"].items()},
            ))
        return responses

    def pos_tag(self, text: str) -> list[tuple[str, str]]:
        response = self._call({"type": "pos_tag", "text": text})
        return [(str(w), str(t)) for w, t in response["tags"]]

    def tag_fills(self, text: str, slot: tuple[int, int], fills: Sequence[int],
                  want_tags: bool = True) -> list[FillTag]:
        response = self._call({"type": "pos_tag", "text": text,
                               "slot": [slot[0], slot[1]],
                               "fills": [int(f) for f in fills],
                               "want_tags": want_tags})
        return [FillTag(token_id=int(i), surface=str(s),
                        tag=None if t is None else str(t))
                for i, s, t in response["fills"]]


class SpawnGateway(ProtocolGateway):
    """Adapter child process over stdio."""

    def __init__(self, command: str | Sequence[str]):
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        try:
            self._proc = subprocess.Popen(argv, stdin=subprocess.PIPE,
                                          stdout=subprocess.PIPE)
        except OSError as exc:
            raise TransportError(f"cannot spawn {argv!r}: {exc}") from exc
        assert self._proc.stdin is not None and self._proc.stdout is not None
        super().__init__(self._proc.stdout, self._proc.stdin)

    def close(self) -> None:
        if self._proc.poll() is None:
            self._proc.stdin.close()
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()


class TcpGateway(ProtocolGateway):
    """Adapter over a TCP connection."""

    def __init__(self, host: str, port: int):
        try:
            self._sock = socket.create_connection((host, port), timeout=30)
        except OSError as exc:
            raise TransportError(f"cannot connect to {host}:{port}: {exc}") from exc
        self._sock.settimeout(None)
        super().__init__(self._sock.makefile("rb"), self._sock.makefile("wb"))

    def close(self) -> None:
        self._sock.close()


def open_gateway(spec: str, seed: int = 0) -> GatewayBase:
    """Gateway from a spec string: mock, spawn:<command>, or tcp:<host:port>."""
    if spec == "mock":
        from .mock import MockGateway
        return MockGateway(seed=seed)
    if spec.startswith("spawn:"):
        return SpawnGateway(spec[len("spawn:"):])
    if spec.startswith("tcp:"):
        host, _, port = spec[len("tcp:"):].rpartition(":")
        if not host:
            raise ValueError(f"tcp spec needs host:port, got {spec!r}")
        return TcpGateway(host, int(port))
    raise ValueError(f"unknown gateway spec {spec!r}")
