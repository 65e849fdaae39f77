"""Small builders shared by the test modules."""

from __future__ import annotations

import numpy as np

from tiermem.backends.base import ChatResponse
from tiermem.backends.mock import MockScorer
from tiermem.core import Turn
from tiermem.segmentation import CompressedTurn, TopicSegment
from tiermem.sensory import compress_text
from tiermem.stm import MemoryEntry


def cturn(turn_id: int, user: str, assistant: str = "", scorer=None, r: float = 1.0) -> CompressedTurn:
    scorer = scorer or MockScorer()
    t = Turn(turn_id, "s", user, assistant or f"reply {turn_id}", turn_id)
    return CompressedTurn(t, compress_text(t.user_text, scorer, r), compress_text(t.assistant_text, scorer, r))


def segment(first_id: int, texts: list[str]) -> TopicSegment:
    return TopicSegment(f"t{first_id:06d}", tuple(cturn(first_id + i, x) for i, x in enumerate(texts)))


class TableEmbedder:
    """Returns fixed vectors for known texts."""

    def __init__(self, table: dict[str, np.ndarray]):
        self.table = {k: np.asarray(v, dtype=float) / np.linalg.norm(v) for k, v in table.items()}
        self.dimension = len(next(iter(self.table.values())))

    def embed(self, text: str) -> np.ndarray:
        return self.table[text]


def unit(vec) -> np.ndarray:
    v = np.asarray(vec, dtype=float)
    return v / np.linalg.norm(v)


def entry(entry_id: str, ts: int, vec, summary: str | None = None) -> MemoryEntry:
    return MemoryEntry(
        entry_id=entry_id,
        topic_id=f"t{ts:06d}",
        summary=summary if summary is not None else f"summary of {entry_id}",
        embedding=unit(vec),
        user_text=f"user {entry_id}",
        model_text=f"model {entry_id}",
        timestamp=ts,
    )


class FailingChat:
    """Raises the given error on every call whose prompt contains ``needle``."""

    def __init__(self, inner, exc: Exception, needle: str = ""):
        self.inner, self.exc, self.needle = inner, exc, needle
        self.calls = 0

    def complete(self, prompt: str) -> ChatResponse:
        self.calls += 1
        if self.needle in prompt:
            raise self.exc
        return self.inner.complete(prompt)
