"""Evaluation harness: dataset loading, QA, judging, segmentation scoring, sweeps."""

from .dataset import EvalInstance, Session, load_dataset
from .judge import judge_answer, parse_verdict, render_judge
from .run import (
    Backends,
    QuestionResult,
    RunResult,
    SegmentationScore,
    SweepRow,
    answer_question,
    eval_segmentation,
    feed_turns,
    mock_backends,
    run_dataset,
    score_boundaries,
    sweep,
)

__all__ = [
    "Backends",
    "EvalInstance",
    "QuestionResult",
    "RunResult",
    "SegmentationScore",
    "Session",
    "SweepRow",
    "answer_question",
    "eval_segmentation",
    "feed_turns",
    "judge_answer",
    "load_dataset",
    "mock_backends",
    "parse_verdict",
    "render_judge",
    "run_dataset",
    "score_boundaries",
    "sweep",
]
