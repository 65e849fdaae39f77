"""Evaluation runs: ingestion, QA, judging, segmentation scoring and sweeps."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

from ..backends.base import ChatModel, Embedder, TokenScorer
from ..backends.mock import HashEmbedder, MockChat, MockScorer, lexical_novelty_profile
from ..backends.responders import (
    echo_top_responder,
    merge_update_responder,
    rubric_judge_responder,
    summary_responder,
)
from ..core import Phase, PipelineConfig, validate_config
from ..errors import TiermemError
from ..ltm import LtmStore
from ..metering import UsageMeter, build_report, metered_complete
from ..pipeline import MemoryPipeline
from ..prompting import render_qa
from ..segmentation import CompressedTurn, Segmenter
from ..sensory import compress_text
from .dataset import EvalInstance
from .judge import judge_answer

logger = logging.getLogger(__name__)

RUN_SCHEMA = "run-result/1"


@dataclass
class Backends:
    scorer: TokenScorer
    embedder: Embedder
    summarizer: ChatModel
    updater: ChatModel
    qa: ChatModel
    judge: ChatModel


def mock_backends(seed: int = 0, cfg: PipelineConfig | None = None) -> Backends:
    """Deterministic doubles for every role; attention follows lexical topic shifts."""
    cfg = cfg or PipelineConfig()
    return Backends(
        scorer=MockScorer(seed, context_window=max(512, cfg.sensory_buffer_capacity), profile=lexical_novelty_profile()),
        embedder=HashEmbedder(256),
        summarizer=MockChat(summary_responder),
        updater=MockChat(merge_update_responder),
        qa=MockChat(echo_top_responder),
        judge=MockChat(rubric_judge_responder),
    )


def _with_context(exc: Exception, where: str) -> Exception:
    exc.args = (f"{where}: {exc}",)
    return exc


def feed_turns(
    instance: EvalInstance, pipeline: MemoryPipeline, updater: ChatModel | None = None
) -> tuple[LtmStore, UsageMeter]:
    """Feed every turn in order, force the end-of-stream flushes, optionally consolidate."""
    for turn in instance.turns:
        try:
            pipeline.feed(turn)
        except TiermemError as exc:
            raise _with_context(exc, f"instance {instance.question_id}, turn {turn.turn_id}") from None
    try:
        pipeline.finish()
        if updater is not None:
            pipeline.consolidate(updater)
    except TiermemError as exc:
        raise _with_context(exc, f"instance {instance.question_id}, end of stream") from None
    return pipeline.store, pipeline.meter


def answer_question(
    instance: EvalInstance,
    store: LtmStore,
    chat: ChatModel,
    embedder: Embedder,
    cfg: PipelineConfig,
    meter: UsageMeter | None = None,
    prompt_dir=None,
) -> tuple[str, list[str]]:
    """Answer from the ``retrieval_topk`` nearest entries; returns (answer, entry ids)."""
    hits = store.retrieve_scored(instance.question, embedder, cfg.retrieval_topk) if len(store) else []
    memories = [(e.date or f"t{e.timestamp}", e.summary) for e, _ in hits]
    prompt = render_qa(memories, instance.question, instance.question_date, prompt_dir)
    resp = metered_complete(chat, prompt, meter, Phase.QA)
    return resp.text.strip(), [e.entry_id for e, _ in hits]


@dataclass
class QuestionResult:
    question_id: str
    question_type: str
    retrieved: list[str] = field(default_factory=list)
    answer: str = ""
    verdict: bool = False
    skipped: bool = False
    error: str = ""
    entries: int = 0


@dataclass
class RunResult:
    questions: list[QuestionResult]
    correct: int
    total: int
    accuracy: float
    usage: dict
    config: dict
    seed: int = 0
    meter: UsageMeter | None = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        d = asdict(replace(self, meter=None))
        d.pop("meter")
        d["schema"] = RUN_SCHEMA
        return d

    def to_json(self) -> str:
        """Timing-free serialization: identical inputs give identical bytes."""
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def run_instance(
    instance: EvalInstance,
    cfg: PipelineConfig,
    backends: Backends,
    meter: UsageMeter,
    consolidate: bool = True,
) -> QuestionResult:
    out = QuestionResult(instance.question_id, instance.category)
    if instance.skipped:
        out.skipped, out.error = True, instance.skip_reason
        return out
    try:
        pipeline = MemoryPipeline(cfg, backends.scorer, backends.embedder, backends.summarizer, meter)
        store, _ = feed_turns(instance, pipeline, backends.updater if consolidate else None)
        out.entries = len(store)
        out.answer, out.retrieved = answer_question(instance, store, backends.qa, backends.embedder, cfg, meter)
        out.verdict = judge_answer(instance.question, instance.answer, out.answer, instance.category,
                                   backends.judge, meter)
    except TiermemError as exc:
        out.error = f"{type(exc).__name__}: {exc}"
        logger.error("%s", out.error)
    return out


def run_dataset(
    instances: Sequence[EvalInstance],
    cfg: PipelineConfig,
    backends: Backends,
    seed: int = 0,
    workers: int = 1,
    consolidate: bool = True,
) -> RunResult:
    """Score every instance; skipped or failed ones count as wrong."""
    validate_config(cfg)
    meter = UsageMeter()

    def one(inst):
        return run_instance(inst, cfg, backends, meter, consolidate)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, instances))
    else:
        results = [one(i) for i in instances]
    correct = sum(1 for r in results if r.verdict)
    total = len(results)
    return RunResult(
        questions=results,
        correct=correct,
        total=total,
        accuracy=correct / total if total else 0.0,
        usage=meter.snapshot(include_timing=False),
        config=cfg.to_dict(),
        seed=seed,
        meter=meter,
    )


# -- segmentation ----------------------------------------------------------


@dataclass
class SegmentationScore:
    mode: str
    labels: int
    predicted: int
    correct: int
    accuracy: float
    precision: float


def score_boundaries(predicted: Sequence[int], labels: Sequence[int], mode: str = "hybrid") -> SegmentationScore:
    """Accuracy is correct boundaries over labels; precision is reported alongside."""
    pred, gold = set(predicted), set(labels)
    tp = len(pred & gold)
    accuracy = tp / len(gold) if gold else float(not pred)
    precision = tp / len(pred) if pred else float(not gold)
    return SegmentationScore(mode, len(gold), len(pred), tp, accuracy, precision)


def detect_stream_boundaries(turns, cfg: PipelineConfig, scorer: TokenScorer, embedder: Embedder) -> list[int]:
    """Turn ids at which the streaming segmenter detected a topic boundary."""
    seg = Segmenter(cfg, scorer, embedder)
    for t in turns:
        user = compress_text(t.user_text, scorer, cfg.compression_ratio, cfg.sensory_buffer_capacity,
                             cfg.fallback_ratio)
        assistant = compress_text(t.assistant_text, scorer, cfg.compression_ratio)
        seg.push(CompressedTurn(t, user, assistant))
    seg.finish()
    return list(seg.detected)


def eval_segmentation(
    instances: Sequence[EvalInstance],
    cfg: PipelineConfig,
    scorer: TokenScorer,
    embedder: Embedder,
    mode: str = "hybrid",
) -> SegmentationScore:
    """Session starts are the labels; counts are pooled over all non-skipped instances."""
    cfg = validate_config(replace(cfg, segmentation_mode=mode))
    predicted: list[tuple[int, int]] = []
    labels: list[tuple[int, int]] = []
    for i, inst in enumerate(instances):
        if inst.skipped:
            continue
        labels.extend((i, b) for b in inst.boundary_turn_ids())
        predicted.extend((i, b) for b in detect_stream_boundaries(inst.turns, cfg, scorer, embedder))
    return score_boundaries(predicted, labels, mode)


# -- sweeps ----------------------------------------------------------------


@dataclass
class SweepRow:
    compression_ratio: float
    stm_threshold: int
    accuracy: float | None = None
    input_k: float | None = None
    output_k: float | None = None
    total_k: float | None = None
    calls: float | None = None
    runtime_s: float | None = None
    error: str = ""
    result: RunResult | None = field(default=None, repr=False, compare=False)


def sweep(
    instances: Sequence[EvalInstance],
    grid: Sequence[tuple[float, int]],
    cfg: PipelineConfig,
    backends_factory: Callable[[PipelineConfig], Backends],
    seed: int = 0,
    consolidate: bool = True,
) -> list[SweepRow]:
    """One isolated run per ``(r, th)`` cell; a failing cell is recorded, not fatal."""
    if not grid:
        raise ValueError("sweep grid is empty")
    rows = []
    for r, th in grid:
        row = SweepRow(r, th)
        try:
            cell = validate_config(replace(cfg, compression_ratio=r, stm_threshold=th))
            result = run_dataset(instances, cell, backends_factory(cell), seed, consolidate=consolidate)
        except (TiermemError, ValueError) as exc:
            row.error = f"{type(exc).__name__}: {exc}"
            rows.append(row)
            continue
        mem = build_report(result.meter, result.total)["memory"]
        row.accuracy = round(result.accuracy, 4)
        row.input_k, row.output_k, row.total_k = mem["input_k"], mem["output_k"], mem["total_k"]
        row.calls, row.runtime_s, row.result = mem["calls"], mem["runtime_s"], result
        rows.append(row)
    return rows


def render_sweep(rows: Sequence[SweepRow]) -> str:
    headers = ["r", "th", "ACC", "Input (k)", "Output (k)", "Total (k)", "Calls", "Time (s)"]
    body = []
    for row in rows:
        if row.error:
            body.append([f"{row.compression_ratio:g}", str(row.stm_threshold), "failed: " + row.error])
            continue
        body.append([
            f"{row.compression_ratio:g}", str(row.stm_threshold), f"{100 * row.accuracy:.2f}",
            f"{row.input_k:.3f}", f"{row.output_k:.3f}", f"{row.total_k:.3f}", f"{row.calls:g}",
            f"{row.runtime_s:.2f}",
        ])
    lines = ["\t".join(headers)] + ["\t".join(r) for r in body]
    return "\n".join(lines) + "\n"
