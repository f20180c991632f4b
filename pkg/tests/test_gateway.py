import io
import json

import numpy as np
import pytest

from cxnprobe.errors import (EncodingError, LengthError, TransportError)
from cxnprobe.gateway import (CachingGateway, DistributionCache,
                              DistributionRequest, MockGateway)
from cxnprobe.gateway import protocol
from cxnprobe.gateway.mock import MAX_POSITIONS, VOCAB, VOCAB_SIZE
from cxnprobe.gateway.server import handle_message

from conftest import CountingGateway


class TestMock:
    def test_handshake_fixed_config(self, mock_gateway):
        info = mock_gateway.handshake()
        assert (info.model_name, info.vocab_size, info.mask_token_id,
                info.max_positions) == ("mock", 64, 0, 128)

    def test_handshake_repeatable(self, mock_gateway):
        assert mock_gateway.handshake() == mock_gateway.handshake()

    def test_tokenize_whitespace_offsets(self, mock_gateway):
        tokens = mock_gateway.tokenize("a b")
        assert [(s, e) for _, s, e in tokens] == [(0, 1), (2, 3)]

    def test_tokenize_empty_raises(self, mock_gateway):
        with pytest.raises(EncodingError):
            mock_gateway.tokenize("")
        with pytest.raises(EncodingError):
            mock_gateway.tokenize("   ")

    def test_tokenize_idempotent(self, mock_gateway):
        text = "The bigger, the better!"
        assert mock_gateway.tokenize(text) == mock_gateway.tokenize(text)

    def test_distributions_deterministic(self, mock_gateway):
        request = DistributionRequest("r", (3, 51, 20, 44), (1, 3))
        first = mock_gateway.distributions(request)
        second = mock_gateway.distributions(request)
        for p in (1, 3):
            assert np.array_equal(first.at(p), second.at(p))

    def test_distributions_normalized(self, mock_gateway):
        request = DistributionRequest("r", (3, 51, 20), (0,))
        log_probs = mock_gateway.distributions(request).at(0)
        assert len(log_probs) == VOCAB_SIZE
        assert abs(np.exp(log_probs).sum() - 1.0) < 1e-4

    def test_extra_mask_changes_distribution(self, mock_gateway):
        # the hash mixes the whole mask set, so {i} vs {i,j} differ at i
        tokens = (3, 51, 20, 44, 8)
        single = mock_gateway.distributions(
            DistributionRequest("a", tokens, (1,))).at(1)
        double = mock_gateway.distributions(
            DistributionRequest("b", tokens, (1, 3))).at(1)
        assert not np.array_equal(single, double)

    def test_length_error(self, mock_gateway):
        tokens = tuple([5] * (MAX_POSITIONS + 1))
        with pytest.raises(LengthError):
            mock_gateway.distributions(DistributionRequest("r", tokens, (0,)))

    def test_pos_tag_comparatives(self, mock_gateway):
        tags = dict(mock_gateway.pos_tag("the bigger the better"))
        assert tags["bigger"] == "JJR"
        assert tags["better"] == "JJR"

    def test_pos_tag_plain_words(self, mock_gateway):
        tags = mock_gateway.pos_tag("the dog ran")
        assert all(t == "X" for _, t in tags)

    def test_pos_tag_irregular_probe_list(self, mock_gateway):
        probe = ("worse better more less fewer further farther later "
                 "bigger smaller faster stronger happier merrier older "
                 "dog tree blue running quickly")
        tags = mock_gateway.pos_tag(probe)
        comparative = {w for w, t in tags if t in ("JJR", "RBR")}
        assert comparative == {"worse", "better", "more", "less", "fewer",
                               "further", "farther", "later", "bigger",
                               "smaller", "faster", "stronger", "happier",
                               "merrier", "older"}

    def test_seed_changes_distributions(self):
        request = DistributionRequest("r", (3, 51), (0,))
        a = MockGateway(seed=1).distributions(request).at(0)
        b = MockGateway(seed=2).distributions(request).at(0)
        assert not np.array_equal(a, b)


class TestFraming:
    def test_roundtrip(self):
        message = {"v": 1, "type": "handshake", "request_id": "r1"}
        stream = io.BytesIO(protocol.encode_message(message))
        assert protocol.read_message(stream) == message
        assert protocol.read_message(stream) is None

    def test_single_byte_representation(self):
        # key order in the dict must not change the bytes
        a = protocol.encode_message({"b": 1, "a": 2, "v": 1})
        b = protocol.encode_message({"v": 1, "a": 2, "b": 1})
        assert a == b

    def test_truncated_frame(self):
        data = protocol.encode_message({"v": 1})[:-2]
        with pytest.raises(TransportError):
            protocol.read_message(io.BytesIO(data))

    def test_vector_codec(self):
        vec = np.array([-1.5, -2.25, -0.125])
        decoded = protocol.decode_vector(protocol.encode_vector(vec))
        assert decoded.dtype == np.float64
        assert np.array_equal(decoded, vec)  # exactly representable in f32

    def test_version_mismatch_is_transport_error(self):
        backend = MockGateway(seed=0)
        reply = handle_message(backend, {"v": 2, "type": "handshake",
                                         "request_id": "r1"})
        assert reply["type"] == "error" and reply["code"] == "version"
        with pytest.raises(TransportError):
            protocol.raise_for_error(reply)


class TestServedGateway:
    def test_handshake(self, served_mock):
        client, backend = served_mock
        assert client.handshake() == backend.handshake()

    def test_tokenize_matches_backend(self, served_mock):
        client, backend = served_mock
        text = "The bigger, the better!"
        assert client.tokenize(text) == backend.tokenize(text)

    def test_distributions_float32_roundtrip(self, served_mock):
        client, backend = served_mock
        request = DistributionRequest("q", (3, 51, 20), (0, 2))
        over_wire = client.distributions(request)
        direct = backend.distributions(request)
        for p in (0, 2):
            # wire vectors are float32; they must match to that precision
            assert np.max(np.abs(over_wire.at(p) - direct.at(p))) < 1e-6
            assert abs(np.exp(over_wire.at(p)).sum() - 1.0) < 1e-4

    def test_batching_transparency(self, served_mock):
        client, _ = served_mock
        requests = [DistributionRequest(f"q{k}", (3, 51, 20, 44), (k % 4,))
                    for k in range(8)]
        one_by_one = [client.distributions(r) for r in requests]
        batched = client.distributions_many(requests)
        for a, b in zip(one_by_one, batched):
            assert a.request_id == b.request_id
            for p in a.per_position:
                assert np.array_equal(a.at(p), b.at(p))

    def test_errors_map_to_exceptions(self, served_mock):
        client, _ = served_mock
        with pytest.raises(EncodingError):
            client.tokenize("")
        with pytest.raises(LengthError):
            client.distributions(
                DistributionRequest("q", tuple([5] * 200), (0,)))

    def test_tag_fills_over_wire(self, served_mock):
        client, backend = served_mock
        text = "the X the better"
        got = client.tag_fills(text, (4, 5), [35, 50], want_tags=True)
        want = backend.tag_fills(text, (4, 5), [35, 50], want_tags=True)
        assert [(f.token_id, f.surface, f.tag) for f in got] == \
            [(f.token_id, f.surface, f.tag) for f in want]

    def test_malformed_request_answered_not_crash(self, served_mock):
        client, _ = served_mock
        reply = client._call.__wrapped__ if hasattr(client._call, "__wrapped__") else None
        # send a bogus message type directly
        with pytest.raises(TransportError):
            client._call({"type": "noise"})
        # the server must still answer afterwards
        assert client.handshake().model_name == "mock"


class TestCache:
    def test_transparency(self, tmp_path, mock_gateway):
        cache = DistributionCache(tmp_path / "d.cache")
        cached = CachingGateway(MockGateway(seed=7), cache)
        requests = [DistributionRequest(f"q{k}", (3, 51, 20, 44), (k % 3, 3))
                    for k in range(6)]
        plain = [mock_gateway.distributions(r) for r in requests]
        # twice through the cache: cold then warm
        for _ in range(2):
            for want, request in zip(plain, requests):
                got = cached.distributions(request)
                for p in want.per_position:
                    assert np.array_equal(got.at(p), want.at(p))

    def test_warm_cache_issues_no_calls(self, tmp_path):
        cache_path = tmp_path / "d.cache"
        requests = [DistributionRequest(f"q{k}", (3, 51, 20), (k % 3,))
                    for k in range(5)]

        counting = CountingGateway(MockGateway(seed=7))
        first = CachingGateway(counting, DistributionCache(cache_path))
        for request in requests:
            first.distributions(request)
        # masks cycle 0,1,2,0,1: repeats are already served from cache
        assert counting.distribution_calls == 3
        first.cache.close()

        counting2 = CountingGateway(MockGateway(seed=7))
        second = CachingGateway(counting2, DistributionCache(cache_path))
        for request in requests:
            second.distributions(request)
        assert counting2.distribution_calls == 0

    def test_cache_ignores_request_id(self, tmp_path):
        cache = DistributionCache(tmp_path / "d.cache")
        counting = CountingGateway(MockGateway(seed=7))
        gw = CachingGateway(counting, cache)
        gw.distributions(DistributionRequest("a", (3, 51), (0,)))
        gw.distributions(DistributionRequest("b", (3, 51), (0,)))
        assert counting.distribution_calls == 1

    def test_namespace_separates_seeds(self, tmp_path):
        request = DistributionRequest("a", (3, 51), (0,))
        for seed in (1, 2):
            gw = MockGateway(seed=seed)
            cache = DistributionCache(tmp_path / f"{gw.cache_namespace()}.cache")
            cached = CachingGateway(gw, cache)
            got = cached.distributions(request).at(0)
            assert np.array_equal(got, MockGateway(seed=seed).distributions(request).at(0))

    def test_torn_record_ignored(self, tmp_path):
        path = tmp_path / "d.cache"
        cache = DistributionCache(path)
        counting = CountingGateway(MockGateway(seed=7))
        gw = CachingGateway(counting, cache)
        gw.distributions(DistributionRequest("a", (3, 51), (0,)))
        cache.close()
        with open(path, "ab") as fh:
            fh.write(b"\x00" * 7)  # interrupted append
        reopened = DistributionCache(path)
        assert len(reopened) == 1
