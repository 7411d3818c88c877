"""Standalone server exposing pretrained encoders and a causal LM over the
newline-delimited JSON backend protocol.

Run with ``disclip-bridge --encoder <checkpoint> --lm <checkpoint>``; any
protocol client (such as the generation engine's remote backend) can then
drive real models for end-to-end smoke tests.
"""

from disclip_bridge.config import BridgeConfig
from disclip_bridge.models import CausalLMAdapter, EncoderAdapter
from disclip_bridge.server import BridgeServer, RequestHandler

__version__ = "0.1.0"

__all__ = [
    "BridgeConfig",
    "BridgeServer",
    "CausalLMAdapter",
    "EncoderAdapter",
    "RequestHandler",
    "__version__",
]
