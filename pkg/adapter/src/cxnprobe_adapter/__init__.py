"""Masked-LM inference server for the cxnprobe gateway protocol."""

__version__ = "0.1.0"

from .server import AdapterConfig, AdapterServer

__all__ = ["AdapterConfig", "AdapterServer", "__version__"]
