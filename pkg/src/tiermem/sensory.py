"""Pre-compression of raw turn text.

Tokens are scored for retention and the top ``r`` fraction (by score) is
kept in original order. ``r`` is a retention rate: ``r=1`` is the identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Sequence

from .backends.base import TokenScorer
from .errors import EmptyInput, NonConvergence, RangeError, ScorerError, UnsupportedBackend


class ScoreMode(str, Enum):
    CLASSIFIER = "classifier"
    ENTROPY = "entropy"


@dataclass(frozen=True)
class ScoredTokens:
    tokens: tuple[str, ...]
    scores: tuple[float, ...]
    mode: ScoreMode = ScoreMode.CLASSIFIER

    def __post_init__(self):
        if len(self.tokens) != len(self.scores):
            raise ValueError("tokens and scores differ in length")
        if self.mode is ScoreMode.CLASSIFIER and any(not 0.0 <= s <= 1.0 for s in self.scores):
            raise ScorerError("classifier retention scores must lie in [0, 1]")
        if self.mode is ScoreMode.ENTROPY and any(not (s >= 0.0 and math.isfinite(s)) for s in self.scores):
            raise ScorerError("surprisal scores must be finite and non-negative")


@dataclass(frozen=True)
class CompressedText:
    text: str
    kept_indices: tuple[int, ...]
    original_token_count: int
    tokens: tuple[str, ...] = ()

    @property
    def token_count(self) -> int:
        return len(self.kept_indices)

    @classmethod
    def empty(cls) -> CompressedText:
        return cls("", (), 0, ())


def score_tokens(text: str, scorer: TokenScorer) -> ScoredTokens:
    tokens = scorer.tokenize(text)
    if not tokens:
        raise EmptyInput("text has no tokens")
    scores = scorer.retention_scores(tokens)
    return ScoredTokens(tuple(tokens), tuple(float(s) for s in scores), ScoreMode.CLASSIFIER)


def entropy_scores(text: str, lm) -> ScoredTokens:
    """Surprisal ``-log P(x_i | x_<i)`` per token; larger means more worth keeping."""
    getter = getattr(lm, "token_logprobs", None)
    if getter is None:
        raise UnsupportedBackend(f"{type(lm).__name__} exposes no token log-probabilities")
    pairs = getter(text)
    if not pairs:
        raise EmptyInput("text has no tokens")
    # max(0.0, .) turns -0.0 into 0.0 for probability-one tokens
    return ScoredTokens(
        tuple(t for t, _ in pairs),
        tuple(max(0.0, -lp) for _, lp in pairs),
        ScoreMode.ENTROPY,
    )


def retained_count(n: int, r: float) -> int:
    """``max(1, ceil(r * n))`` evaluated exactly on the binary value of ``r``."""
    return max(1, math.ceil(Fraction(r) * n))


def top_indices(scores: Sequence[float], m: int) -> list[int]:
    """Positions of the ``m`` highest scores, earlier position first on ties, in original order."""
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return sorted(order[:m])


def _check_ratio(r: float, name: str = "compression_ratio"):
    if not (isinstance(r, (int, float)) and 0 < r <= 1):
        raise RangeError(name, f"{name} must be in (0, 1], got {r!r}")


def compress(scored: ScoredTokens, r: float, original_text: str) -> CompressedText:
    _check_ratio(r)
    n = len(scored.tokens)
    if n == 0:
        return CompressedText(original_text, (), 0, ())
    m = retained_count(n, r)
    if m >= n:
        return CompressedText(original_text, tuple(range(n)), n, scored.tokens)
    kept = tuple(top_indices(scored.scores, m))
    tokens = tuple(scored.tokens[i] for i in kept)
    return CompressedText(" ".join(tokens), kept, n, tokens)


def shrink_to_fit(c: CompressedText, limit: int, scorer: TokenScorer, ratio: float = 0.5) -> CompressedText:
    """Keep re-scoring and compressing at ``ratio`` until ``c`` has at most ``limit`` tokens."""
    if limit <= 0:
        raise RangeError("limit", "limit must be positive")
    _check_ratio(ratio, "fallback_ratio")
    while c.token_count > limit:
        scores = scorer.retention_scores(c.tokens)
        if len(scores) != len(c.tokens):
            raise NonConvergence("scorer returned a score count that does not match the tokens")
        m = min(retained_count(len(c.tokens), ratio), len(c.tokens) - 1)
        keep = top_indices(scores, m)
        tokens = tuple(c.tokens[i] for i in keep)
        c = CompressedText(
            " ".join(tokens),
            tuple(c.kept_indices[i] for i in keep),
            c.original_token_count,
            tokens,
        )
    return c


def compress_to_fit(text: str, limit: int, scorer: TokenScorer, ratio: float = 0.5) -> CompressedText:
    if limit <= 0:
        raise RangeError("limit", "limit must be positive")
    scored = score_tokens(text, scorer)
    whole = compress(scored, 1.0, text)
    return shrink_to_fit(whole, limit, scorer, ratio)


def compress_text(
    text: str,
    scorer: TokenScorer,
    r: float,
    limit: int | None = None,
    fallback_ratio: float = 0.5,
) -> CompressedText:
    """Pipeline entry point: empty text stays empty; oversize results are halved down to ``limit``."""
    if not text or not text.strip():
        if text:
            scorer.tokenize(text)  # still surfaces corrupted input
        return CompressedText.empty()
    c = compress(score_tokens(text, scorer), r, text)
    if limit is not None and c.token_count > limit:
        c = shrink_to_fit(c, limit, scorer, fallback_ratio)
    return c
