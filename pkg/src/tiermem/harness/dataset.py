"""LongMemEval-format dataset loading.

Each instance is a JSON object with ``question_id``, ``question_type``,
``question``, ``answer``, ``question_date``, ``haystack_session_ids``,
``haystack_dates`` and ``haystack_sessions`` (lists of ``{role, content}``
messages). Question ids ending in ``_abs`` mark abstention questions.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

from ..backends.mock import find_corruption
from ..core import Turn
from ..errors import ParseError, ScorerError

logger = logging.getLogger(__name__)

QUESTION_TYPES = (
    "temporal-reasoning",
    "multi-session",
    "knowledge-update",
    "single-session-user",
    "single-session-assistant",
    "single-session-preference",
    "abstention",
)
REQUIRED = ("question_id", "question_type", "question", "answer", "haystack_sessions")
DATE_FORMATS = ("%Y/%m/%d (%a) %H:%M", "%Y/%m/%d %H:%M", "%Y-%m-%d %H:%M", "%Y-%m-%d", "%Y/%m/%d")


@dataclass(frozen=True)
class Session:
    session_id: str
    date: str
    turns: tuple[Turn, ...]


@dataclass
class EvalInstance:
    question_id: str
    question_type: str
    question: str
    answer: str
    question_date: str = ""
    sessions: list[Session] = field(default_factory=list)
    skipped: bool = False
    skip_reason: str = ""

    @property
    def is_abstention(self) -> bool:
        return self.question_id.endswith("_abs") or self.question_type == "abstention"

    @property
    def category(self) -> str:
        return "abstention" if self.is_abstention else self.question_type

    @property
    def turns(self) -> list[Turn]:
        return [t for s in self.sessions for t in s.turns]

    def boundary_turn_ids(self) -> list[int]:
        """Ground-truth topic boundaries: the first turn of every session but the first."""
        return [s.turns[0].turn_id for s in self.sessions[1:] if s.turns]


def parse_date(text: str) -> datetime | None:
    for fmt in DATE_FORMATS:
        try:
            return datetime.strptime(text.strip(), fmt)
        except ValueError:
            continue
    return None


def _pair_turns(messages: list, start_id: int, session_id: str, date: str, index: int) -> list[Turn]:
    """User message plus the assistant reply that follows it; unpaired messages form half-turns."""
    turns: list[Turn] = []

    def emit(user: str, assistant: str) -> None:
        if user or assistant:
            tid = start_id + len(turns)
            turns.append(Turn(tid, session_id, user, assistant, timestamp=tid, date=date))

    user: str | None = None
    for msg in messages:
        if not isinstance(msg, dict) or "role" not in msg or "content" not in msg:
            raise ParseError(f"session {session_id}: malformed message {msg!r}"[:200], index)
        role, content = msg["role"], str(msg["content"])
        if role == "user":
            if user is not None:
                emit(user, "")
            user = content
        elif role == "assistant":
            emit(user or "", content)
            user = None
        else:
            raise ParseError(f"session {session_id}: unknown role {role!r}", index)
    if user is not None:
        emit(user, "")
    return turns


def _instance(raw: object, index: int) -> EvalInstance:
    if not isinstance(raw, dict):
        raise ParseError(f"instance {index} is not an object", index)
    missing = [k for k in REQUIRED if k not in raw]
    if missing:
        raise ParseError(f"instance {index} lacks {missing}", index)
    sessions_raw = raw["haystack_sessions"]
    ids = raw.get("haystack_session_ids") or [f"s{i}" for i in range(len(sessions_raw))]
    dates = raw.get("haystack_dates") or [""] * len(sessions_raw)
    if not (isinstance(sessions_raw, list) and len(ids) == len(sessions_raw) == len(dates)):
        raise ParseError(f"instance {index}: session ids, dates and sessions differ in length", index)

    order = list(range(len(sessions_raw)))
    parsed = [parse_date(d) for d in dates]
    if all(p is not None for p in parsed):
        order.sort(key=lambda i: parsed[i])
    sessions: list[Session] = []
    next_id = 0
    for i in order:
        if not isinstance(sessions_raw[i], list):
            raise ParseError(f"instance {index}: session {ids[i]} is not a message list", index)
        turns = _pair_turns(sessions_raw[i], next_id, str(ids[i]), str(dates[i]), index)
        next_id += len(turns)
        sessions.append(Session(str(ids[i]), str(dates[i]), tuple(turns)))
    return EvalInstance(
        question_id=str(raw["question_id"]),
        question_type=str(raw["question_type"]),
        question=str(raw["question"]),
        answer=str(raw["answer"]),
        question_date=str(raw.get("question_date", "")),
        sessions=sessions,
    )


def _corruption(inst: EvalInstance, scorer) -> str | None:
    texts = [inst.question, inst.answer] + [x for t in inst.turns for x in (t.user_text, t.assistant_text)]
    for text in texts:
        if scorer is not None:
            try:
                scorer.tokenize(text)
            except ScorerError as exc:
                return str(exc)
        else:
            pos = find_corruption(text)
            if pos is not None:
                return f"undecodable character at offset {pos}"
    return None


def load_dataset(path: str | Path, scorer=None) -> list[EvalInstance]:
    """Instances in file order; undecodable ones are kept but marked ``skipped``."""
    data = Path(path).read_bytes().decode("utf-8", errors="surrogateescape")
    if not data.strip():
        raise ParseError(f"{path}: empty dataset file")
    try:
        raw = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc
    if not isinstance(raw, list) or not raw:
        raise ParseError(f"{path}: expected a non-empty list of instances")
    out = []
    for i, item in enumerate(raw):
        inst = _instance(item, i)
        reason = _corruption(inst, scorer)
        if reason:
            inst.skipped, inst.skip_reason = True, reason
            logger.warning("instance %d (%s) skipped: %s", i, inst.question_id, reason)
        out.append(inst)
    return out


def dump_instance(inst: EvalInstance) -> dict:
    """Inverse of loading, in the same public schema."""
    sessions = []
    for s in inst.sessions:
        msgs = []
        for t in s.turns:
            if t.user_text:
                msgs.append({"role": "user", "content": t.user_text})
            if t.assistant_text:
                msgs.append({"role": "assistant", "content": t.assistant_text})
        sessions.append(msgs)
    return {
        "question_id": inst.question_id,
        "question_type": inst.question_type,
        "question": inst.question,
        "answer": inst.answer,
        "question_date": inst.question_date,
        "haystack_session_ids": [s.session_id for s in inst.sessions],
        "haystack_dates": [s.date for s in inst.sessions],
        "haystack_sessions": sessions,
    }
