"""Regenerate the golden protocol transcript fixture.

The transcript freezes the wire bytes of a fixed request sequence against
the seed-0 mock. Run from the repository root:

    python tools/record_golden_transcript.py

Only regenerate on a deliberate protocol change; the fixture is the
compatibility contract for every adapter.
"""

import io
from pathlib import Path

from cxnprobe.gateway import MockGateway, serve
from cxnprobe.gateway.protocol import encode_message

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"

REQUESTS = [
    {"v": 1, "type": "handshake", "request_id": "t1"},
    {"v": 1, "type": "tokenize", "request_id": "t2", "text": "a b"},
    {"v": 1, "type": "tokenize", "request_id": "t3",
     "text": "The bigger, the better!"},
    {"v": 1, "type": "distributions", "request_id": "t4",
     "token_ids": [3, 51, 20, 44], "masked_positions": [1]},
    {"v": 1, "type": "distributions", "request_id": "t5",
     "token_ids": [3, 51, 20, 44], "masked_positions": [1, 3]},
    {"v": 1, "type": "pos_tag", "request_id": "t6",
     "text": "the bigger the better"},
    {"v": 1, "type": "pos_tag", "request_id": "t7",
     "text": "the X the better", "slot": [4, 5], "fills": [35, 31, 50],
     "want_tags": True},
    {"v": 1, "type": "pos_tag", "request_id": "t8",
     "text": "the X the better", "slot": [4, 5], "fills": [35, 31],
     "want_tags": False},
    {"v": 1, "type": "tokenize", "request_id": "t9", "text": ""},
    {"v": 1, "type": "nonsense", "request_id": "t10"},
    {"v": 7, "type": "handshake", "request_id": "t11"},
]


def main() -> None:
    request_bytes = b"".join(encode_message(m) for m in REQUESTS)
    out = io.BytesIO()
    serve(MockGateway(seed=0), io.BytesIO(request_bytes), out)
    FIXTURES.mkdir(parents=True, exist_ok=True)
    (FIXTURES / "golden_requests.bin").write_bytes(request_bytes)
    (FIXTURES / "golden_responses.bin").write_bytes(out.getvalue())
    print(f"wrote {len(request_bytes)} request bytes, "
          f"{len(out.getvalue())} response bytes")


if __name__ == "__main__":
    main()
