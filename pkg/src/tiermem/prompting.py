"""Versioned prompt templates and the renderers that fill them."""

from __future__ import annotations

import re
from importlib import resources
from pathlib import Path
from typing import Sequence

SUMMARY = "summary_v1"
UPDATE = "update_v1"
QA = "qa_v1"

SEGMENT_HEADER = re.compile(r"^=== Segment (\d+) ===$", re.M)
NUMBERED_LINE = re.compile(r"^\s*\[(\d+)\]\s*(.*?)\s*$")

_cache: dict[tuple[str, str | None], str] = {}


def load_template(name: str, directory: str | Path | None = None) -> str:
    key = (name, str(directory) if directory else None)
    if key not in _cache:
        if directory is not None:
            text = (Path(directory) / f"{name}.txt").read_text(encoding="utf-8")
        else:
            text = resources.files("tiermem.prompts").joinpath(f"{name}.txt").read_text(encoding="utf-8")
        _cache[key] = text
    return _cache[key]


def render_summary(segment_blocks: Sequence[str], directory=None) -> str:
    parts = [f"=== Segment {i} ===\n{block}" for i, block in enumerate(segment_blocks, 1)]
    return load_template(SUMMARY, directory).format(count=len(segment_blocks), segments="\n\n".join(parts))


def parse_numbered(reply: str, count: int) -> list[str] | None:
    """Extract ``[n] text`` lines 1..count; None unless every index appears."""
    found: dict[int, str] = {}
    for line in reply.splitlines():
        m = NUMBERED_LINE.match(line)
        if m and m.group(2):
            found.setdefault(int(m.group(1)), m.group(2))
    if set(range(1, count + 1)) - set(found):
        return None
    return [found[i] for i in range(1, count + 1)]


def render_update(target: str, sources: Sequence[str], directory=None) -> str:
    lines = "\n".join(f"- {s}" for s in sources)
    return load_template(UPDATE, directory).format(target=target, sources=lines)


def render_qa(memories: Sequence[tuple[str, str]], question: str, question_date: str = "", directory=None) -> str:
    lines = "\n".join(f"[{when}] {text}" for when, text in memories) or "(no memories)"
    return load_template(QA, directory).format(
        memories=lines, question=question, question_date=question_date or "now"
    )
