"""Private inference over gradient-boosting decision forests.

A client submits encrypted feature vectors; a server evaluates its forest
homomorphically and returns per-class scores, with node/path clustering,
blind code conversion, and ciphertext compression keeping the cost down.
"""

from .fhe import FheParams, OpLedger, ReferenceBackend
from .forest import Forest, load_model, make_random_forest, quantize, save_model
from .protocol import Client, InferenceResult, LoopbackChannel, ServerEngine, TcpChannel, TcpServer

__all__ = [
    "FheParams",
    "OpLedger",
    "ReferenceBackend",
    "Forest",
    "load_model",
    "save_model",
    "quantize",
    "make_random_forest",
    "ServerEngine",
    "Client",
    "InferenceResult",
    "LoopbackChannel",
    "TcpChannel",
    "TcpServer",
]

__version__ = "0.1.0"
