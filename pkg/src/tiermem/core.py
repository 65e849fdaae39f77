"""Shared domain types and pipeline configuration."""

from __future__ import annotations

import math
import threading
from dataclasses import asdict, dataclass, fields, replace
from enum import Enum
from pathlib import Path
from typing import Any, Mapping

from .errors import RangeError

SEGMENTATION_MODES = ("attention", "similarity", "hybrid")


class Phase(str, Enum):
    SUMMARY = "Summary"
    UPDATE = "Update"
    QA = "QA"
    JUDGE = "Judge"


@dataclass(frozen=True)
class Turn:
    """One user/assistant exchange, the unit of incremental ingestion.

    ``timestamp`` is a logical ordinal; ``date`` carries the dataset's
    human-readable session time when one exists.
    """

    turn_id: int
    session_id: str
    user_text: str
    assistant_text: str
    timestamp: int
    date: str = ""

    def __post_init__(self):
        if not self.user_text and not self.assistant_text:
            raise ValueError(f"turn {self.turn_id} has neither user nor assistant text")


@dataclass(frozen=True)
class UsageRecord:
    phase: Phase
    input_tokens: int
    output_tokens: int
    wall_time: float = 0.0

    @property
    def total(self) -> int:
        return self.input_tokens + self.output_tokens


@dataclass(frozen=True)
class PipelineConfig:
    # Fraction of tokens KEPT by pre-compression (a retention rate).
    compression_ratio: float = 0.5
    stm_threshold: int = 256
    sensory_buffer_capacity: int = 512
    similarity_threshold: float = 0.5
    queue_topk: int = 5
    queue_length: int = 5
    attention_layers: tuple[int, ...] = (8, 9, 10, 11)
    sink_mask_width: int = 3
    fallback_ratio: float = 0.5
    retrieval_topk: int = 5
    segmentation_mode: str = "hybrid"

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["attention_layers"] = list(self.attention_layers)
        return d

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> PipelineConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise KeyError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(data)
        if "attention_layers" in kwargs:
            kwargs["attention_layers"] = tuple(int(x) for x in kwargs["attention_layers"])
        return cls(**kwargs)

    def to_flat(self) -> str:
        lines = []
        for key, value in self.to_dict().items():
            if isinstance(value, list):
                value = ",".join(str(v) for v in value)
            elif isinstance(value, float):
                value = repr(value)
            lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"

    def with_overrides(self, overrides: Mapping[str, str]) -> PipelineConfig:
        return replace(self, **_coerce(overrides))


_FIELD_TYPES = {
    "compression_ratio": float,
    "stm_threshold": int,
    "sensory_buffer_capacity": int,
    "similarity_threshold": float,
    "queue_topk": int,
    "queue_length": int,
    "attention_layers": "layers",
    "sink_mask_width": int,
    "fallback_ratio": float,
    "retrieval_topk": int,
    "segmentation_mode": str,
}


def _coerce(raw: Mapping[str, str]) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for key, value in raw.items():
        if key not in _FIELD_TYPES:
            raise KeyError(f"unknown config key: {key}")
        kind = _FIELD_TYPES[key]
        if not isinstance(value, str):
            out[key] = tuple(value) if kind == "layers" else value
        elif kind == "layers":
            out[key] = tuple(int(v) for v in value.split(",") if v.strip())
        else:
            try:
                out[key] = kind(value.strip())
            except ValueError as exc:
                raise RangeError(key, f"{key}: cannot parse {value!r}") from exc
    return out


def parse_flat(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    pairs: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value")
        key, value = line.split("=", 1)
        pairs[key.strip()] = value.strip()
    return pairs


def load_config(path: str | Path | None = None, overrides: Mapping[str, str] | None = None) -> PipelineConfig:
    """Build a validated config from an optional flat file plus overrides (overrides win)."""
    values: dict[str, str] = {}
    if path is not None:
        values.update(parse_flat(Path(path).read_text(encoding="utf-8")))
    if overrides:
        values.update(overrides)
    return validate_config(PipelineConfig().with_overrides(values))


def validate_config(cfg: PipelineConfig) -> PipelineConfig:
    r = cfg.compression_ratio
    if not (isinstance(r, (int, float)) and math.isfinite(r) and 0 < r <= 1):
        raise RangeError("compression_ratio", f"compression_ratio must be in (0, 1], got {r!r}")
    if cfg.stm_threshold < 0:
        raise RangeError("stm_threshold")
    if cfg.sensory_buffer_capacity <= 0:
        raise RangeError("sensory_buffer_capacity")
    if not 0 <= cfg.similarity_threshold <= 1:
        raise RangeError("similarity_threshold")
    if cfg.queue_topk < 1:
        raise RangeError("queue_topk")
    if cfg.queue_length < 1:
        raise RangeError("queue_length")
    if not cfg.attention_layers or any(layer < 0 for layer in cfg.attention_layers):
        raise RangeError("attention_layers")
    if cfg.sink_mask_width < 0 or 2 * cfg.sink_mask_width >= cfg.sensory_buffer_capacity:
        raise RangeError("sink_mask_width")
    if not 0 < cfg.fallback_ratio < 1:
        raise RangeError("fallback_ratio")
    if cfg.retrieval_topk < 1:
        raise RangeError("retrieval_topk")
    if cfg.segmentation_mode not in SEGMENTATION_MODES:
        raise RangeError("segmentation_mode")
    return cfg


class LogicalClock:
    """Thread-safe strictly increasing integer clock."""

    def __init__(self, start: int = 0):
        self._next = start
        self._lock = threading.Lock()

    def tick(self) -> int:
        with self._lock:
            value = self._next
            self._next += 1
            return value

    def peek(self) -> int:
        return self._next
