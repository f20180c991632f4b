import base64
import io
import json
import struct

import numpy as np
import pytest

from cxnprobe_adapter.protocol import encode_message, read_message, ProtocolEOF
from cxnprobe_adapter.server import AdapterConfig, AdapterServer


@pytest.fixture(scope="module")
def server(checkpoint):
    # rule tagger: spaCy models are not installable in the sandbox
    return AdapterServer(AdapterConfig(model_ref=checkpoint, tagger="rule"))


def call(server, **fields):
    message = {"v": 1}
    message.update(fields)
    return server.handle(message)


def decode_vec(payload: str) -> np.ndarray:
    return np.frombuffer(base64.b64decode(payload), dtype="<f4").astype(np.float64)


class TestHandshake:
    def test_fields(self, server):
        reply = call(server, type="handshake", request_id="h1")
        assert reply["type"] == "handshake"
        assert reply["vocab_size"] == 37
        assert reply["mask_token_id"] == 4
        assert reply["max_positions"] == 46  # 48 positions minus [CLS]/[SEP]

    def test_repeatable(self, server):
        a = call(server, type="handshake", request_id="x")
        b = call(server, type="handshake", request_id="x")
        assert a == b

    def test_version_mismatch(self, server):
        reply = server.handle({"v": 3, "type": "handshake", "request_id": "v"})
        assert reply["type"] == "error" and reply["code"] == "version"


class TestTokenize:
    def test_offsets_cover_words(self, server):
        text = "The dog ran fast"
        reply = call(server, type="tokenize", request_id="t1", text=text)
        tokens = reply["tokens"]
        assert [text[s:e] for _, s, e in tokens] == ["The", "dog", "ran", "fast"]
        assert all(isinstance(t, int) for t, _, _ in tokens)

    def test_no_special_tokens_on_the_wire(self, server):
        reply = call(server, type="tokenize", request_id="t2", text="the dog")
        ids = [t for t, _, _ in reply["tokens"]]
        assert 2 not in ids and 3 not in ids  # [CLS]/[SEP] stay internal

    def test_empty_text_is_encoding_error(self, server):
        reply = call(server, type="tokenize", request_id="t3", text="")
        assert reply["type"] == "error" and reply["code"] == "encoding"

    def test_idempotent(self, server):
        a = call(server, type="tokenize", request_id="i", text="much less so")
        b = call(server, type="tokenize", request_id="i", text="much less so")
        assert a == b


class TestDistributions:
    def tokens(self, server, text):
        return [t for t, _, _ in
                call(server, type="tokenize", request_id="tk", text=text)["tokens"]]

    def test_normalized_full_vocabulary(self, server):
        ids = self.tokens(server, "the dog ran fast")
        reply = call(server, type="distributions", request_id="d1",
                     token_ids=ids, masked_positions=[1])
        (payload,) = reply["per_position"].values()
        vec = decode_vec(payload)
        assert len(vec) == 37
        assert abs(np.exp(vec).sum() - 1.0) < 1e-4

    def test_exactly_requested_positions(self, server):
        ids = self.tokens(server, "the dog ran fast")
        reply = call(server, type="distributions", request_id="d2",
                     token_ids=ids, masked_positions=[0, 2])
        assert sorted(reply["per_position"]) == ["0", "2"]

    def test_deterministic(self, server):
        ids = self.tokens(server, "it was so hot")
        a = call(server, type="distributions", request_id="q",
                 token_ids=ids, masked_positions=[2])
        b = call(server, type="distributions", request_id="q",
                 token_ids=ids, masked_positions=[2])
        assert a == b  # byte-identical payloads

    def test_simultaneous_masking_changes_context(self, server):
        ids = self.tokens(server, "the dog ran fast and fast")
        single = call(server, type="distributions", request_id="a",
                      token_ids=ids, masked_positions=[1])
        double = call(server, type="distributions", request_id="b",
                      token_ids=ids, masked_positions=[1, 3])
        va = decode_vec(single["per_position"]["1"])
        vb = decode_vec(double["per_position"]["1"])
        assert not np.array_equal(va, vb)

    def test_mask_token_actually_masks(self, server, checkpoint):
        # the masked position's original id must not matter
        ids = self.tokens(server, "the dog ran fast")
        variant = list(ids)
        variant[1] = ids[2]  # replace the word that gets masked anyway
        a = call(server, type="distributions", request_id="a",
                 token_ids=ids, masked_positions=[1])
        b = call(server, type="distributions", request_id="b",
                 token_ids=variant, masked_positions=[1])
        assert a["per_position"] == b["per_position"]

    def test_length_error(self, server):
        reply = call(server, type="distributions", request_id="l",
                     token_ids=[5] * 200, masked_positions=[0])
        assert reply["type"] == "error" and reply["code"] == "length"

    def test_bad_positions(self, server):
        reply = call(server, type="distributions", request_id="p",
                     token_ids=[5, 6], masked_positions=[7])
        assert reply["type"] == "error" and reply["code"] == "bad_request"
        reply = call(server, type="distributions", request_id="p2",
                     token_ids=[5, 6], masked_positions=[1, 1])
        assert reply["type"] == "error" and reply["code"] == "bad_request"

    def test_out_of_vocab_token(self, server):
        reply = call(server, type="distributions", request_id="o",
                     token_ids=[5, 999], masked_positions=[0])
        assert reply["type"] == "error" and reply["code"] == "bad_request"


class TestPosTag:
    def test_plain_tags(self, server):
        reply = call(server, type="pos_tag", request_id="pt",
                     text="the bigger the better")
        tags = dict((w, t) for w, t in reply["tags"])
        assert tags["bigger"] == "JJR" and tags["better"] == "JJR"

    def test_fills_with_tags(self, server):
        text = "the X the better"
        reply = call(server, type="pos_tag", request_id="f1", text=text,
                     slot=[4, 5], fills=[16, 11], want_tags=True)
        fills = {surface: tag for _, surface, tag in reply["fills"]}
        assert fills["bigger"] == "JJR"
        assert fills["it"] == "X"

    def test_fills_surfaces_only(self, server):
        reply = call(server, type="pos_tag", request_id="f2",
                     text="the X ran", slot=[4, 5], fills=[16, 19],
                     want_tags=False)
        assert [(s, t) for _, s, t in reply["fills"]] == \
            [("bigger", None), ("less", None)]

    def test_no_tagger_is_tagger_unavailable(self, checkpoint):
        bare = AdapterServer(AdapterConfig(model_ref=checkpoint, tagger="none"))
        reply = call(bare, type="pos_tag", request_id="x", text="the dog")
        assert reply["type"] == "error" and reply["code"] == "tagger_unavailable"
        # surfaces-only fills still work without any tagger
        reply = call(bare, type="pos_tag", request_id="y", text="the X",
                     slot=[4, 5], fills=[16], want_tags=False)
        assert reply["fills"][0][1] == "bigger"


class TestServeLoop:
    def run_transcript(self, server, messages) -> list[dict]:
        request_bytes = b"".join(encode_message(m) for m in messages)
        out = io.BytesIO()
        server.serve(io.BytesIO(request_bytes), out)
        out.seek(0)
        replies = []
        while True:
            try:
                replies.append(read_message(out))
            except ProtocolEOF:
                return replies

    def test_full_transcript_round_trip(self, server):
        messages = [
            {"v": 1, "type": "handshake", "request_id": "t1"},
            {"v": 1, "type": "tokenize", "request_id": "t2",
             "text": "it was so hot that the road melted"},
            {"v": 1, "type": "distributions", "request_id": "t3",
             "token_ids": [11, 12, 9, 13], "masked_positions": [2]},
            {"v": 1, "type": "pos_tag", "request_id": "t4",
             "text": "the bigger the better"},
            {"v": 1, "type": "nonsense", "request_id": "t5"},
            {"v": 7, "type": "handshake", "request_id": "t6"},
        ]
        replies = self.run_transcript(server, messages)
        assert [r["request_id"] for r in replies] == \
            ["t1", "t2", "t3", "t4", "t5", "t6"]
        assert replies[0]["type"] == "handshake"
        assert replies[4]["code"] == "bad_request"
        assert replies[5]["code"] == "version"

    def test_transcript_byte_stable_across_runs(self, server, checkpoint):
        messages = [
            {"v": 1, "type": "handshake", "request_id": "t1"},
            {"v": 1, "type": "distributions", "request_id": "t2",
             "token_ids": [11, 12, 9, 13, 10], "masked_positions": [1, 3]},
        ]
        request_bytes = b"".join(encode_message(m) for m in messages)
        outputs = []
        for _ in range(2):
            out = io.BytesIO()
            server.serve(io.BytesIO(request_bytes), out)
            outputs.append(out.getvalue())
        assert outputs[0] == outputs[1]
        # a freshly loaded server answers within float tolerance
        fresh = AdapterServer(AdapterConfig(model_ref=checkpoint, tagger="rule"))
        out = io.BytesIO()
        fresh.serve(io.BytesIO(request_bytes), out)
        out.seek(0)
        first = read_message(out)
        second = read_message(out)
        base = io.BytesIO(outputs[0])
        want_first = read_message(base)
        want_second = read_message(base)
        assert first == want_first
        for position in want_second["per_position"]:
            got = decode_vec(second["per_position"][position])
            want = decode_vec(want_second["per_position"][position])
            assert np.max(np.abs(got - want)) < 1e-6

    def test_malformed_json_frame_ends_loop_quietly(self, server):
        bad = struct.pack(">I", 5) + b"{{{{{"
        out = io.BytesIO()
        server.serve(io.BytesIO(bad), out)  # must not raise
        assert out.getvalue() == b""
