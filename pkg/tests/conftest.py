import socket
import threading

import numpy as np
import pytest

from cxnprobe.gateway import (DistributionRequest, DistributionResponse,
                              GatewayBase, MockGateway, ProtocolGateway, serve)


class CountingGateway(GatewayBase):
    """Pass-through wrapper that counts live distribution calls."""

    def __init__(self, inner):
        self.inner = inner
        self.distribution_calls = 0

    def handshake(self):
        return self.inner.handshake()

    def cache_namespace(self):
        return self.inner.cache_namespace()

    def tokenize(self, text):
        return self.inner.tokenize(text)

    def distributions(self, request):
        self.distribution_calls += 1
        return self.inner.distributions(request)

    def pos_tag(self, text):
        return self.inner.pos_tag(text)

    def tag_fills(self, text, slot, fills, want_tags=True):
        return self.inner.tag_fills(text, slot, fills, want_tags)


class ConstantGateway(MockGateway):
    """Mock whose every distribution is one fixed vector; tokenizer and
    tagger behave like the mock's."""

    def __init__(self, probs, seed=0):
        super().__init__(seed=seed)
        probs = np.asarray(probs, dtype=np.float64)
        with np.errstate(divide="ignore"):
            self._log_probs = np.log(probs)
        # keep log-prob vectors finite: tiny floor off the support
        floor = np.log(1e-300)
        self._log_probs[~np.isfinite(self._log_probs)] = floor

    def distributions(self, request):
        return DistributionResponse(
            request_id=request.request_id,
            per_position={p: self._log_probs.copy()
                          for p in request.masked_positions})


class SplitWordGateway(MockGateway):
    """Mock variant whose tokenizer splits long words into two tokens,
    exercising multi-token skip paths."""

    def __init__(self, seed=0, split_over=6):
        super().__init__(seed=seed)
        self.split_over = split_over

    def tokenize(self, text):
        out = []
        for token_id, start, end in super().tokenize(text):
            if end - start > self.split_over:
                mid = (start + end) // 2
                out.append((token_id, start, mid))
                out.append(((token_id + 1) % 64, mid, end))
            else:
                out.append((token_id, start, end))
        return out


@pytest.fixture
def mock_gateway():
    return MockGateway(seed=7)


@pytest.fixture
def served_mock():
    """MockGateway behind the real wire protocol over a socketpair."""
    left, right = socket.socketpair()
    backend = MockGateway(seed=7)
    server_rfile = left.makefile("rb")
    server_wfile = left.makefile("wb")
    thread = threading.Thread(target=serve,
                              args=(backend, server_rfile, server_wfile),
                              daemon=True)
    thread.start()
    client = ProtocolGateway(right.makefile("rb"), right.makefile("wb"))
    yield client, backend
    right.close()
    left.close()
