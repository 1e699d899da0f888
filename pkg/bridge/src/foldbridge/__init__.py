"""foldbridge: reference evaluator bridge speaking line-delimited JSON on stdio."""

from .server import PROTOCOL_VERSION, BridgeConfig, handle_request, serve

__version__ = "0.1.0"

__all__ = ["BridgeConfig", "PROTOCOL_VERSION", "handle_request", "serve", "__version__"]
