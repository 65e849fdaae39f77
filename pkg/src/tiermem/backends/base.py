from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence, runtime_checkable

import numpy as np


@dataclass(frozen=True)
class ChatResponse:
    text: str
    input_tokens: int
    output_tokens: int
    attempts: int = 1


@runtime_checkable
class TokenScorer(Protocol):
    """Retention scorer with an optional per-layer token attention capability."""

    context_window: int

    def tokenize(self, text: str) -> list[str]: ...

    def retention_scores(self, tokens: Sequence[str]) -> list[float]: ...


@runtime_checkable
class AttentionScorer(TokenScorer, Protocol):
    def attention(self, sentences: Sequence[Sequence[str]], layers: Sequence[int]) -> np.ndarray:
        """Token attention for the packed sentences, shape ``(len(layers), T, T)``."""
        ...


@runtime_checkable
class Embedder(Protocol):
    dimension: int

    def embed(self, text: str) -> np.ndarray: ...


@runtime_checkable
class ChatModel(Protocol):
    def complete(self, prompt: str) -> ChatResponse: ...


@runtime_checkable
class LogprobModel(Protocol):
    def token_logprobs(self, text: str) -> list[tuple[str, float]]: ...


def embed_many(embedder: Embedder, texts: Sequence[str]) -> np.ndarray:
    batch = getattr(embedder, "embed_batch", None)
    if batch is not None:
        return np.asarray(batch(list(texts)), dtype=np.float64)
    if not texts:
        return np.zeros((0, embedder.dimension))
    return np.vstack([embedder.embed(t) for t in texts])
