"""Self-hosted NFT similarity system: ingestion, embedding, vector search,
task pipeline, analytics, and HTTP API."""

from .embedding import DIMENSION, EmbedderDescriptor, embed, embed_base64, embed_bytes
from .vector_store import QueryResult, VectorRecord, VectorStore, cosine_distance

__all__ = [
    "DIMENSION",
    "EmbedderDescriptor",
    "QueryResult",
    "VectorRecord",
    "VectorStore",
    "cosine_distance",
    "embed",
    "embed_base64",
    "embed_bytes",
]

__version__ = "0.1.0"
