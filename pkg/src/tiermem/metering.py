"""Phase-tagged accounting of model tokens, calls and wall time."""

from __future__ import annotations

import json
import threading
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass
from typing import Callable

from .core import Phase

SCHEMA = "usage-report/1"
MEMORY_PHASES = (Phase.SUMMARY, Phase.UPDATE)


@dataclass
class PhaseTotals:
    input_tokens: int = 0
    output_tokens: int = 0
    calls: int = 0
    attempts: int = 0
    busy_time: float = 0.0
    span_time: float = 0.0

    @property
    def total_tokens(self) -> int:
        return self.input_tokens + self.output_tokens

    @property
    def runtime(self) -> float:
        """Wall time of explicit phase spans, else the summed call durations."""
        return self.span_time if self.span_time > 0 else self.busy_time

    def __iadd__(self, other: PhaseTotals) -> PhaseTotals:
        for name in ("input_tokens", "output_tokens", "calls", "attempts", "busy_time", "span_time"):
            setattr(self, name, getattr(self, name) + getattr(other, name))
        return self


class UsageMeter:
    def __init__(self, clock: Callable[[], float] = time.perf_counter):
        self._clock = clock
        self._lock = threading.Lock()
        self._phases = {p: PhaseTotals() for p in Phase}

    def record(self, phase: Phase, input_tokens: int, output_tokens: int, duration: float = 0.0, attempts: int = 1):
        if input_tokens < 0 or output_tokens < 0 or duration < 0:
            raise ValueError("usage counts must be non-negative")
        with self._lock:
            acc = self._phases[Phase(phase)]
            acc.input_tokens += int(input_tokens)
            acc.output_tokens += int(output_tokens)
            acc.calls += 1
            acc.attempts += int(attempts)
            acc.busy_time += duration
        return self

    @contextmanager
    def span(self, phase: Phase):
        start = self._clock()
        try:
            yield
        finally:
            elapsed = self._clock() - start
            with self._lock:
                self._phases[Phase(phase)].span_time += elapsed

    def totals(self, phase: Phase) -> PhaseTotals:
        with self._lock:
            return PhaseTotals(**asdict(self._phases[Phase(phase)]))

    def calls(self, phase: Phase) -> int:
        return self.totals(phase).calls

    def combined(self, phases=tuple(Phase)) -> PhaseTotals:
        out = PhaseTotals()
        for p in phases:
            out += self.totals(p)
        return out

    def merge(self, other: UsageMeter) -> UsageMeter:
        for p in Phase:
            theirs = other.totals(p)
            with self._lock:
                self._phases[p] += theirs
        return self

    def state(self) -> dict:
        """Lossless dump of every accumulator, for saving a meter between commands."""
        return {p.value: asdict(self.totals(p)) for p in Phase}

    @classmethod
    def from_state(cls, state: dict) -> UsageMeter:
        meter = cls()
        for name, row in state.items():
            meter._phases[Phase(name)] = PhaseTotals(**row)
        return meter

    def snapshot(self, include_timing: bool = True) -> dict:
        out = {}
        for p in Phase:
            t = self.totals(p)
            row = {
                "input_tokens": t.input_tokens,
                "output_tokens": t.output_tokens,
                "total_tokens": t.total_tokens,
                "calls": t.calls,
                "attempts": t.attempts,
            }
            if include_timing:
                row["runtime_s"] = t.runtime
            out[p.value] = row
        return out


def record(meter: UsageMeter, phase: Phase, in_tokens: int, out_tokens: int, duration: float = 0.0) -> UsageMeter:
    return meter.record(phase, in_tokens, out_tokens, duration)


def metered_complete(chat, prompt: str, meter: UsageMeter | None, phase: Phase):
    """Call ``chat.complete`` and book one provider request against ``phase``."""
    start = time.perf_counter()
    resp = chat.complete(prompt)
    if meter is not None:
        meter.record(phase, resp.input_tokens, resp.output_tokens, time.perf_counter() - start, resp.attempts)
    return resp


def _k(tokens: float) -> float:
    return round(tokens / 1000.0, 3)


def _row(t: PhaseTotals, scale: float) -> dict:
    return {
        "input_k": _k(t.input_tokens / scale),
        "output_k": _k(t.output_tokens / scale),
        "total_k": _k(t.total_tokens / scale),
        "calls": round(t.calls / scale, 2),
        "attempts": round(t.attempts / scale, 2),
        "runtime_s": round(t.runtime / scale, 2),
    }


TABLE_COLUMNS = (
    ("summary_in_k", "Summary In (k)"),
    ("summary_out_k", "Summary Out (k)"),
    ("update_in_k", "Update In (k)"),
    ("update_out_k", "Update Out (k)"),
    ("total_k", "Total (k)"),
    ("calls", "Calls"),
    ("runtime_s", "Runtime (s)"),
)


def build_report(meter: UsageMeter, instances: int = 1) -> dict:
    """Report document; counts are divided by ``instances`` to give per-instance means."""
    scale = float(max(1, instances))
    phases = {p.value: _row(meter.totals(p), scale) for p in Phase}
    memory = meter.combined(MEMORY_PHASES)
    summary, update = meter.totals(Phase.SUMMARY), meter.totals(Phase.UPDATE)

    def cell(t: PhaseTotals, attr: str):
        return _k(getattr(t, attr) / scale) if t.calls else None

    mem_row = _row(memory, scale)
    table = {
        "summary_in_k": cell(summary, "input_tokens"),
        "summary_out_k": cell(summary, "output_tokens"),
        "update_in_k": cell(update, "input_tokens"),
        "update_out_k": cell(update, "output_tokens"),
        "total_k": mem_row["total_k"],
        "calls": mem_row["calls"],
        "runtime_s": mem_row["runtime_s"],
    }
    return {
        "schema": SCHEMA,
        "instances": int(max(1, instances)),
        "phases": phases,
        "memory": mem_row,
        "grand_total": _row(meter.combined(), scale),
        "table": table,
    }


def _fmt(key: str, value) -> str:
    if value is None:
        return "--"
    if key.endswith("_k"):
        return f"{value:.3f}"
    if key == "calls" or key == "attempts":
        return f"{value:g}"
    return f"{value:.2f}"


def render_text(doc: dict) -> str:
    headers = ["Phase", "In (k)", "Out (k)", "Total (k)", "Calls", "Attempts", "Runtime (s)"]
    keys = ["input_k", "output_k", "total_k", "calls", "attempts", "runtime_s"]
    rows = [[name] + [_fmt(k, row[k]) for k in keys] for name, row in doc["phases"].items()]
    rows.append(["Memory"] + [_fmt(k, doc["memory"][k]) for k in keys])
    rows.append(["All"] + [_fmt(k, doc["grand_total"][k]) for k in keys])
    lines = _table(headers, rows)
    lines.append("")
    lines.extend(_table([h for _, h in TABLE_COLUMNS], [[_fmt(k, doc["table"][k]) for k, _ in TABLE_COLUMNS]]))
    return "\n".join(lines) + "\n"


def _table(headers: list[str], rows: list[list[str]]) -> list[str]:
    widths = [max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(headers)]

    def fmt(cells):
        return " | ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()

    return [fmt(headers), "-+-".join("-" * w for w in widths)] + [fmt(r) for r in rows]


def report(meter: UsageMeter, format: str = "json", instances: int = 1) -> str:
    doc = build_report(meter, instances)
    if format == "json":
        return json.dumps(doc, indent=2, sort_keys=True)
    if format == "text":
        return render_text(doc)
    raise ValueError(f"unknown report format {format!r}")


def parse_text_table(text: str) -> dict[str, str]:
    """Read the memory-cost row back out of :func:`render_text` output."""
    lines = [ln for ln in text.strip().splitlines()]
    header, _, values = lines[-3:]
    names = [c.strip() for c in header.split("|")]
    cells = [c.strip() for c in values.split("|")]
    by_title = dict(zip(names, cells))
    return {key: by_title[title] for key, title in TABLE_COLUMNS}
