"""Topic-aware short-term memory: batches segments and summarizes them into entries."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .backends.base import ChatModel, Embedder, embed_many
from .core import LogicalClock, Phase
from .metering import UsageMeter, metered_complete
from .prompting import parse_numbered, render_summary
from .segmentation import TopicSegment

logger = logging.getLogger(__name__)

NORM_TOLERANCE = 1e-6


def _frozen_unit(vec) -> np.ndarray:
    arr = np.array(vec, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class MemoryEntry:
    entry_id: str
    topic_id: str
    summary: str
    embedding: np.ndarray = field(repr=False)
    user_text: str
    model_text: str
    timestamp: int
    turn_ids: tuple[int, ...] = ()
    date: str = ""

    def __post_init__(self):
        emb = _frozen_unit(self.embedding)
        if emb.ndim != 1 or abs(float(np.linalg.norm(emb)) - 1.0) > NORM_TOLERANCE:
            raise ValueError(f"entry {self.entry_id}: embedding must be a unit vector")
        object.__setattr__(self, "embedding", emb)

    def revised(self, summary: str, embedding) -> MemoryEntry:
        return replace(self, summary=summary, embedding=embedding)

    def to_record(self) -> dict:
        return {
            "entry_id": self.entry_id,
            "topic_id": self.topic_id,
            "summary": self.summary,
            "user_text": self.user_text,
            "model_text": self.model_text,
            "timestamp": self.timestamp,
            "turn_ids": list(self.turn_ids),
            "date": self.date,
        }

    @classmethod
    def from_record(cls, rec: dict, embedding) -> MemoryEntry:
        return cls(
            entry_id=rec["entry_id"],
            topic_id=rec["topic_id"],
            summary=rec["summary"],
            embedding=embedding,
            user_text=rec["user_text"],
            model_text=rec["model_text"],
            timestamp=rec["timestamp"],
            turn_ids=tuple(rec.get("turn_ids", ())),
            date=rec.get("date", ""),
        )


@dataclass
class StmBuffer:
    threshold: int
    segments: list[TopicSegment] = field(default_factory=list)

    @property
    def token_count(self) -> int:
        return sum(s.token_count for s in self.segments)


def admit_segment(buf: StmBuffer, seg: TopicSegment) -> tuple[StmBuffer, bool]:
    buf.segments.append(seg)
    return buf, buf.token_count >= buf.threshold


def render_segment(seg: TopicSegment) -> str:
    lines = []
    for ct in seg.turns:
        when = ct.turn.date or f"turn {ct.turn.turn_id}"
        if ct.user.text:
            lines.append(f"[{when}] user: {ct.user.text}")
        if ct.assistant.text:
            lines.append(f"[{when}] assistant: {ct.assistant.text}")
    return "\n".join(lines)


def _summarize_one(block: str, summarizer, meter, prompt_dir) -> str:
    resp = metered_complete(summarizer, render_summary([block], prompt_dir), meter, Phase.SUMMARY)
    parsed = parse_numbered(resp.text, 1)
    return parsed[0] if parsed else resp.text.strip()


def summarize_segments(
    segments: Sequence[TopicSegment],
    summarizer: ChatModel,
    meter: UsageMeter | None = None,
    prompt_dir=None,
    workers: int = 1,
) -> list[str]:
    """One summarizer call covering all segments, one summary line back per segment.

    If the reply cannot be split into exactly one line per segment, each
    segment is summarized on its own; those extra calls are metered too.
    """
    blocks = [render_segment(s) for s in segments]
    resp = metered_complete(summarizer, render_summary(blocks, prompt_dir), meter, Phase.SUMMARY)
    parsed = parse_numbered(resp.text, len(blocks))
    if parsed is None and len(blocks) == 1 and resp.text.strip():
        parsed = [resp.text.strip()]
    if parsed is not None:
        return parsed
    logger.warning("summary reply did not match %d segments; summarizing individually", len(blocks))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda b: _summarize_one(b, summarizer, meter, prompt_dir), blocks))
    return [_summarize_one(b, summarizer, meter, prompt_dir) for b in blocks]


def flush(
    buf: StmBuffer,
    summarizer: ChatModel,
    embedder: Embedder,
    meter: UsageMeter | None,
    clock: LogicalClock,
    prompt_dir=None,
    workers: int = 1,
) -> list[MemoryEntry]:
    """Summarize every buffered segment into one entry each, then empty the buffer.

    Any backend failure propagates before the buffer is touched, so a flush
    can simply be retried.
    """
    if not buf.segments:
        raise ValueError("cannot flush an empty STM buffer")
    segments = list(buf.segments)
    summaries = summarize_segments(segments, summarizer, meter, prompt_dir, workers)
    vectors = embed_many(embedder, summaries)
    entries = []
    for seg, summary, vec in zip(segments, summaries, vectors):
        ts = clock.tick()
        entries.append(
            MemoryEntry(
                entry_id=f"e{ts:06d}",
                topic_id=seg.topic_id,
                summary=summary,
                embedding=vec / np.linalg.norm(vec),
                user_text="\n".join(ct.turn.user_text for ct in seg.turns if ct.turn.user_text),
                model_text="\n".join(ct.turn.assistant_text for ct in seg.turns if ct.turn.assistant_text),
                timestamp=ts,
                turn_ids=tuple(ct.turn.turn_id for ct in seg.turns),
                date=seg.turns[-1].turn.date,
            )
        )
    buf.segments.clear()
    return entries
