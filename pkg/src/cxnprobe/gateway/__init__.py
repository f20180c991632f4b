"""Model-agnostic inference boundary: wire protocol, client, cache, mock."""

from .cache import CachingGateway, DistributionCache
from .client import ProtocolGateway, SpawnGateway, TcpGateway, open_gateway
from .mock import MockGateway
from .server import serve
from .types import (DistributionRequest, DistributionResponse, FillTag,
                    GatewayBase, ModelInfo)

__all__ = [
    "CachingGateway",
    "DistributionCache",
    "DistributionRequest",
    "DistributionResponse",
    "FillTag",
    "GatewayBase",
    "MockGateway",
    "ModelInfo",
    "ProtocolGateway",
    "SpawnGateway",
    "TcpGateway",
    "open_gateway",
    "serve",
]
