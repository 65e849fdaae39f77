"""Model backend interfaces, deterministic mocks and HTTP clients."""

from .base import AttentionScorer, ChatModel, ChatResponse, Embedder, LogprobModel, TokenScorer, embed_many
from .http import Endpoint, HttpChatModel, HttpEmbedder, HttpTokenScorer
from .mock import (
    HashEmbedder,
    MockChat,
    MockScorer,
    TableLM,
    UniformLM,
    find_corruption,
    hash_embed,
    lexical_novelty_profile,
    planted_profile,
)

__all__ = [
    "AttentionScorer",
    "ChatModel",
    "ChatResponse",
    "Embedder",
    "Endpoint",
    "HashEmbedder",
    "HttpChatModel",
    "HttpEmbedder",
    "HttpTokenScorer",
    "LogprobModel",
    "MockChat",
    "MockScorer",
    "TableLM",
    "TokenScorer",
    "UniformLM",
    "embed_many",
    "find_corruption",
    "hash_embed",
    "lexical_novelty_profile",
    "planted_profile",
]
