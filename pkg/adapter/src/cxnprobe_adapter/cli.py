"""Entry point: cxnprobe-adapter --model <ref> --listen stdio|tcp:<port>."""

from __future__ import annotations

import argparse
import os
import socket
import sys

from .server import AdapterConfig, AdapterServer


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cxnprobe-adapter",
        description="Serve a masked LM over the gateway wire protocol.")
    parser.add_argument("--model", required=True,
                        help="hub id or local checkpoint path")
    parser.add_argument("--listen", default="stdio",
                        help="stdio or tcp:<port> (localhost)")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--tagger", default="spacy",
                        choices=("spacy", "rule", "none"))
    parser.add_argument("--tagger-model", default="en_core_web_sm")
    parser.add_argument("--batch-size", type=int, default=1)
    parser.add_argument("--trust-remote-code", action="store_true",
                        help="allow custom model code (some checkpoints need it)")
    parser.add_argument("--revision", default=None,
                        help="pin the checkpoint revision")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    config = AdapterConfig(model_ref=args.model, device=args.device,
                           tagger=args.tagger, tagger_model=args.tagger_model,
                           batch_size=args.batch_size,
                           trust_remote_code=args.trust_remote_code,
                           revision=args.revision)

    wire_out = None
    if args.listen == "stdio":
        # stdout is the protocol channel: claim the fd before anything
        # (model loading, progress bars) can print into the frame stream
        wire_out = os.fdopen(os.dup(sys.stdout.fileno()), "wb")
        sys.stdout = sys.stderr

    try:
        server = AdapterServer(config)
    except Exception as exc:
        print(f"cannot load {args.model!r}: {exc}", file=sys.stderr)
        return 1

    if wire_out is not None:
        server.serve(sys.stdin.buffer, wire_out)
        return 0
    if args.listen.startswith("tcp:"):
        port = int(args.listen.split(":", 1)[1])
        with socket.create_server(("127.0.0.1", port)) as sock:
            print(f"listening on 127.0.0.1:{port}", file=sys.stderr)
            conn, _ = sock.accept()
            with conn, conn.makefile("rb") as rfile, conn.makefile("wb") as wfile:
                server.serve(rfile, wfile)
        return 0
    print(f"unsupported --listen {args.listen!r}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    raise SystemExit(main())
