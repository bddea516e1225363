"""HTTP inference server implementing the decompilation backend protocol.

The server answers POST /v1/decompile with a generated Solidity completion
and GET /v1/health with readiness, wrapping either a locally loadable causal
language model or a deterministic echo model for protocol conformance
testing without weights.
"""

from .config import AdapterConfig
from .models import EchoModel, load_model
from .server import AdapterServer, serve
from .tokenizer import count_tokens, tokenize

__all__ = [
    "AdapterConfig",
    "AdapterServer",
    "EchoModel",
    "count_tokens",
    "load_model",
    "serve",
    "tokenize",
]
