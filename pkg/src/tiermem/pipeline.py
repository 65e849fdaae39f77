"""Online memory construction: compress, segment, summarize, insert."""

from __future__ import annotations

import logging
import time
from pathlib import Path
from typing import Callable

from .backends.base import ChatModel, Embedder, TokenScorer
from .core import LogicalClock, Phase, PipelineConfig, Turn, validate_config
from .ltm import LtmStore, build_update_queues, consolidate
from .metering import UsageMeter
from .segmentation import CompressedTurn, Segmenter, TopicSegment
from .sensory import compress_text
from .stm import MemoryEntry, StmBuffer, admit_segment, flush

logger = logging.getLogger(__name__)


class MemoryPipeline:
    """Feeds turns one at a time through the three memory tiers.

    ``feed`` only ever sees the turn it is given; ``finish`` forces the
    sensory buffer and the STM buffer so that every fed turn ends up in
    exactly one LTM entry.
    """

    def __init__(
        self,
        cfg: PipelineConfig,
        scorer: TokenScorer,
        embedder: Embedder,
        summarizer: ChatModel,
        meter: UsageMeter | None = None,
        store: LtmStore | None = None,
        clock: LogicalClock | None = None,
        *,
        keep_trace: bool = False,
        prompt_dir: str | Path | None = None,
        store_dir: str | Path | None = None,
        workers: int = 1,
    ):
        self.cfg = validate_config(cfg)
        self.scorer = scorer
        self.embedder = embedder
        self.summarizer = summarizer
        self.meter = meter if meter is not None else UsageMeter()
        self.store = store if store is not None else LtmStore()
        self.clock = clock if clock is not None else LogicalClock()
        self.segmenter = Segmenter(cfg, scorer, embedder, keep_trace)
        self.stm = StmBuffer(cfg.stm_threshold)
        self.prompt_dir = prompt_dir
        self.store_dir = Path(store_dir) if store_dir is not None else None
        self.workers = workers
        self.turns_fed = 0
        self.segments_emitted = 0
        self._last_turn_id: int | None = None

    def compress_turn(self, turn: Turn) -> CompressedTurn:
        cfg = self.cfg
        user = compress_text(
            turn.user_text, self.scorer, cfg.compression_ratio, cfg.sensory_buffer_capacity, cfg.fallback_ratio
        )
        assistant = compress_text(turn.assistant_text, self.scorer, cfg.compression_ratio)
        return CompressedTurn(turn, user, assistant)

    def feed(self, turn: Turn) -> list[MemoryEntry]:
        """Process one turn; returns the entries this step inserted into LTM."""
        if self._last_turn_id is not None and turn.turn_id <= self._last_turn_id:
            raise ValueError(f"turn {turn.turn_id} arrived after turn {self._last_turn_id}")
        self._last_turn_id = turn.turn_id
        ct = self.compress_turn(turn)
        self.turns_fed += 1
        return self._admit(self.segmenter.push(ct), force=False)

    def finish(self) -> list[MemoryEntry]:
        """End of stream: segment what is buffered and flush the STM."""
        return self._admit(self.segmenter.finish(), force=True)

    def _admit(self, segments: list[TopicSegment], force: bool) -> list[MemoryEntry]:
        inserted: list[MemoryEntry] = []
        for seg in segments:
            self.segments_emitted += 1
            _, needs_flush = admit_segment(self.stm, seg)
            if needs_flush:
                inserted.extend(self._flush())
        if force and self.stm.segments:
            inserted.extend(self._flush())
        return inserted

    def _flush(self) -> list[MemoryEntry]:
        with self.meter.span(Phase.SUMMARY):
            entries = flush(self.stm, self.summarizer, self.embedder, self.meter, self.clock, self.prompt_dir, self.workers)
        for e in entries:
            self.store.insert(e)
            if self.store_dir is not None:
                LtmStore.append_to(self.store_dir, e)
        return entries

    def consolidate(self, updater: ChatModel, workers: int | None = None) -> LtmStore:
        queues = build_update_queues(self.store, self.cfg.queue_topk, self.cfg.queue_length)
        self.store = consolidate(self.store, queues, updater, self.embedder, self.meter, workers, self.prompt_dir)
        if self.store_dir is not None:
            self.store.save(self.store_dir)
        return self.store


class IdleTrigger:
    """Runs ``action`` once the stream has been quiet for ``idle_seconds``.

    Call ``touch`` on activity and ``poll`` periodically; no thread is owned.
    """

    def __init__(self, idle_seconds: float, action: Callable[[], object], clock: Callable[[], float] = time.monotonic):
        if idle_seconds <= 0:
            raise ValueError("idle_seconds must be positive")
        self.idle_seconds = idle_seconds
        self.action = action
        self.clock = clock
        self._last = clock()
        self._dirty = False

    def touch(self) -> None:
        self._last = self.clock()
        self._dirty = True

    def poll(self) -> bool:
        if self._dirty and self.clock() - self._last >= self.idle_seconds:
            self._dirty = False
            self.action()
            return True
        return False
