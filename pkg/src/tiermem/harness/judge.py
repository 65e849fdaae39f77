"""LLM-as-judge scoring with one template per question category."""

from __future__ import annotations

import re

from ..backends.base import ChatModel
from ..core import Phase
from ..errors import UnparseableVerdict
from ..metering import UsageMeter, metered_complete
from ..prompting import load_template

TEMPLATE_FOR = {
    "single-session-user": "judge_standard",
    "single-session-assistant": "judge_standard",
    "multi-session": "judge_standard",
    "temporal-reasoning": "judge_temporal",
    "knowledge-update": "judge_knowledge_update",
    "single-session-preference": "judge_preference",
    "abstention": "judge_abstention",
}

_VERDICT = re.compile(r"\b(yes|no)\b", re.I)


def render_judge(question: str, gold: str, response: str, question_type: str, directory=None) -> str:
    try:
        name = TEMPLATE_FOR[question_type]
    except KeyError:
        raise ValueError(f"no judge template for question type {question_type!r}") from None
    return load_template(name, directory).format(question=question, answer=gold, response=response)


def parse_verdict(reply: str) -> bool:
    """First standalone yes/no in the reply, case-insensitive."""
    m = _VERDICT.search(reply)
    if m is None:
        raise UnparseableVerdict(f"judge reply has no yes/no: {reply[:80]!r}")
    return m.group(1).lower() == "yes"


def judge_answer(
    question: str,
    gold: str,
    response: str,
    question_type: str,
    judge: ChatModel,
    meter: UsageMeter | None = None,
    directory=None,
) -> bool:
    prompt = render_judge(question, gold, response, question_type, directory)
    return parse_verdict(metered_complete(judge, prompt, meter, Phase.JUDGE).text)
