"""Reference stub server for the figclass wire protocol."""

from .server import StubServer, serve
from .stubs import StubError, StubScript, fingerprint, hash_embedding, oracle_answer

__version__ = "0.1.0"

__all__ = [
    "StubError",
    "StubScript",
    "StubServer",
    "fingerprint",
    "hash_embedding",
    "oracle_answer",
    "serve",
]
