"""Rule-based reply functions for :class:`MockChat`, one per pipeline role.

Each responder reads the structure of the artifact's own prompt templates,
so a mock run exercises the same render/parse path as a remote model.
"""

from __future__ import annotations

import re

from ..prompting import SEGMENT_HEADER

_LINE_PREFIX = re.compile(r"^(\[[^\]]*\]\s*)?(user|assistant):\s*", re.I)


def summary_responder(prompt: str, width: int = 10) -> str:
    """``[n] SUMMARY: <first `width` tokens of segment n>`` for every segment."""
    heads = list(SEGMENT_HEADER.finditer(prompt))
    lines = []
    for idx, m in enumerate(heads):
        end = heads[idx + 1].start() if idx + 1 < len(heads) else len(prompt)
        body = [_LINE_PREFIX.sub("", ln) for ln in prompt[m.end():end].strip().splitlines()]
        tokens = " ".join(body).split()[:width]
        lines.append(f"[{m.group(1)}] SUMMARY: {' '.join(tokens)}")
    return "\n".join(lines)


def _update_parts(prompt: str) -> tuple[str, list[str]]:
    _, _, rest = prompt.partition("=== Target memory ===")
    target, _, sources = rest.partition("=== Newer related memories ===")
    items = [ln[2:].strip() for ln in sources.strip().splitlines() if ln.startswith("- ")]
    return target.strip(), items


def identity_update_responder(prompt: str) -> str:
    return _update_parts(prompt)[0]


def merge_update_responder(prompt: str) -> str:
    """Append every source fact not already present; never drops target text."""
    target, sources = _update_parts(prompt)
    merged = target
    for src in sources:
        if src not in merged:
            merged = f"{merged} + {src}"
    return merged


def overwrite_update_responder(prompt: str) -> str:
    """Hard-update double: the newest source replaces the target outright."""
    target, sources = _update_parts(prompt)
    return sources[0] if sources else target


def echo_top_responder(prompt: str) -> str:
    """Return the most relevant memory's text, or abstain when there is none."""
    _, _, rest = prompt.partition("=== Memories ===")
    for line in rest.strip().splitlines():
        if line.startswith("["):
            return line.split("] ", 1)[1] if "] " in line else line
        break
    return "I don't know; the memories do not contain that information."


_ABSTAIN = ("don't know", "do not know", "not enough information", "no information", "unanswerable",
            "cannot be determined", "not mentioned")
_NUMBER_UNIT = re.compile(r"(\d+)\s*(day|week|month|year|hour|minute)s?", re.I)


def _field(prompt: str, label: str, following: tuple[str, ...]) -> str:
    start = prompt.find(label)
    if start < 0:
        return ""
    start += len(label)
    end = len(prompt)
    for nxt in following:
        pos = prompt.find(nxt, start)
        if 0 <= pos < end:
            end = pos
    return prompt[start:end].strip()


def rubric_judge_responder(prompt: str) -> str:
    """A judge that applies the template's rubric literally.

    Containment of the gold answer counts as correct; the temporal template's
    off-by-one allowance and the abstention template are honoured.
    """
    gold = ""
    for label in ("Correct Answer:", "Rubric:", "Explanation:"):
        gold = gold or _field(prompt, label, ("Model Response:",))
    response = _field(prompt, "Model Response:", ("\n\n",))
    resp_l = response.lower()
    if "unanswerable" in prompt.split("Question:")[0]:
        return "yes" if any(p in resp_l for p in _ABSTAIN) else "no"
    if gold and gold.lower() in resp_l:
        return "yes"
    if "off-by-one" in prompt:
        g = _NUMBER_UNIT.search(gold)
        r = _NUMBER_UNIT.search(response)
        if g and r and g.group(2).lower() == r.group(2).lower() and abs(int(g.group(1)) - int(r.group(1))) <= 1:
            return "yes"
    return "no"


def constant_responder(reply: str):
    return lambda prompt: reply
