"""Deterministic test doubles for the scorer, embedder and chat roles.

Every mock is a pure function of its input and seed, so whole pipeline runs
are bit-reproducible.
"""

from __future__ import annotations

import hashlib
import math
import re
import threading
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from ..errors import EmptyInput, ScorerError
from .base import ChatResponse

_WORD = re.compile(r"\w+")

STOPWORDS = frozenset(
    """a an and are as at be but by can could did do does for from had has have
    how i i'm if in is it its just me my of on or our so that the their them then
    there these they this to up was we were what when which who will with would
    you your yes no not also about really very""".split()
)

_CONTROL = re.compile(r"[\x00-\x08\x0b\x0c\x0e-\x1f\x7f�\ud800-\udfff]")


def find_corruption(text: str) -> int | None:
    """Index of the first undecodable/corrupted character, or None."""
    m = _CONTROL.search(text)
    return m.start() if m else None


def _digest(*parts: object) -> int:
    h = hashlib.blake2b("\x1f".join(map(str, parts)).encode("utf-8", "surrogatepass"), digest_size=8)
    return int.from_bytes(h.digest(), "little")


def stable_unit(*parts: object) -> float:
    """Deterministic pseudo-random value in [0, 1) keyed by ``parts``."""
    return _digest(*parts) / 2.0**64


def content_words(tokens: Sequence[str]) -> set[str]:
    words = set()
    for tok in tokens:
        for w in _WORD.findall(tok.lower()):
            if w not in STOPWORDS:
                words.add(w)
    return words


AttentionProfile = Callable[[Sequence[Sequence[str]]], Sequence[float]]


def planted_profile(boundaries, high: float = 1.0, low: float = 0.1) -> AttentionProfile:
    """Sub-diagonal weights that peak exactly at the given sentence indices."""
    marks = frozenset(boundaries)

    def profile(sentences):
        return [high if k in marks else low for k in range(len(sentences))]

    return profile


def lexical_novelty_profile(high: float = 1.0, low: float = 0.1) -> AttentionProfile:
    """Sub-diagonal weight grows with lexical novelty of sentence k against k-1.

    A sentence sharing no content words with its predecessor gets ``high``;
    a tiny content-keyed jitter breaks exact ties so plateaus stay rare.
    """

    def profile(sentences):
        words = [content_words(s) for s in sentences]
        out = [low]
        for k in range(1, len(sentences)):
            a, b = words[k], words[k - 1]
            overlap = len(a & b) / min(len(a), len(b)) if a and b else 0.0
            jitter = 1e-3 * stable_unit("jitter", " ".join(sentences[k]), " ".join(sentences[k - 1]))
            out.append(low + (high - low) * (1.0 - overlap) + jitter)
        return out

    return profile


class MockScorer:
    """Whitespace tokenizer with hash-based retention scores and synthetic attention.

    Stopwords score in [0, 0.5), other tokens in [0.5, 1), which mimics a
    learned compressor dropping function words first.
    """

    def __init__(
        self,
        seed: int = 0,
        context_window: int = 512,
        num_layers: int = 12,
        profile: AttentionProfile | None = None,
        base_range: tuple[float, float] = (0.05, 0.15),
        self_weight: float = 0.05,
    ):
        self.seed = seed
        self.context_window = context_window
        self.num_layers = num_layers
        self.profile = profile
        self.base_range = base_range
        self.self_weight = self_weight

    def tokenize(self, text: str) -> list[str]:
        pos = find_corruption(text)
        if pos is not None:
            raise ScorerError(f"corrupted character {text[pos]!r} at offset {pos}")
        return text.split()

    def retention_scores(self, tokens: Sequence[str]) -> list[float]:
        scores = []
        for i, tok in enumerate(tokens):
            u = stable_unit(self.seed, i, tok)
            stripped = tok.lower().strip(".,!?;:'\"()")
            scores.append(0.5 * u if stripped in STOPWORDS else 0.5 + 0.5 * u)
        return scores

    def _sentence_matrix(self, sentences, layer: int) -> np.ndarray:
        n = len(sentences)
        lo, hi = self.base_range
        if self.profile is None:
            key = _digest(self.seed, layer, *(" ".join(s) for s in sentences))
            rng = np.random.default_rng(key)
            S = lo + (hi - lo) * rng.random((n, n))
        else:
            S = np.full((n, n), (lo + hi) / 2)
            d = list(self.profile(sentences))
            for k in range(1, n):
                S[k, k - 1] = d[k]
        return np.tril(S, -1)

    def attention(self, sentences: Sequence[Sequence[str]], layers: Sequence[int]) -> np.ndarray:
        if not sentences:
            raise EmptyInput("no sentences to attend over")
        for layer in layers:
            if not 0 <= layer < self.num_layers:
                raise ScorerError(f"layer {layer} outside model depth {self.num_layers}")
        lens = [len(s) for s in sentences]
        T = sum(lens)
        sent_of = np.repeat(np.arange(len(sentences)), lens)
        pos = np.arange(T)
        same = sent_of[:, None] == sent_of[None, :]
        causal_self = same & (pos[None, :] <= pos[:, None])
        out = np.empty((len(layers), T, T))
        for i, layer in enumerate(layers):
            S = self._sentence_matrix(sentences, layer if self.profile is None else 0)
            A = S[sent_of[:, None], sent_of[None, :]]
            A[causal_self] = self.self_weight
            out[i] = A
        return out


def hash_embed(text: str, dimension: int) -> np.ndarray:
    """Feature-hashed bag of lowercase word tokens, L2-normalized."""
    if dimension < 2:
        raise ValueError("dimension must be >= 2")
    tokens = _WORD.findall(text.lower()) or [""]
    v = np.zeros(dimension)
    for tok in tokens:
        v[_bucket(tok, dimension)] += 1.0
    return v / math.sqrt(float(v @ v))


@lru_cache(maxsize=65536)
def _bucket(token: str, dimension: int) -> int:
    return _digest("bucket", token) % dimension


class HashEmbedder:
    def __init__(self, dimension: int = 256):
        if dimension < 2:
            raise ValueError("dimension must be >= 2")
        self.dimension = dimension

    def embed(self, text: str) -> np.ndarray:
        return hash_embed(text, self.dimension)


class MockChat:
    """Chat double driven by a ``prompt -> reply`` function; tokens are whitespace words."""

    def __init__(self, responder: Callable[[str], str]):
        self.responder = responder
        self.calls = 0
        self._lock = threading.Lock()

    def complete(self, prompt: str) -> ChatResponse:
        text = self.responder(prompt)
        with self._lock:
            self.calls += 1
        return ChatResponse(text=text, input_tokens=len(prompt.split()), output_tokens=len(text.split()))


class UniformLM:
    """Every token has probability 1/vocab_size."""

    def __init__(self, vocab_size: int):
        self.vocab_size = vocab_size

    def token_logprobs(self, text: str) -> list[tuple[str, float]]:
        return [(tok, -math.log(self.vocab_size)) for tok in text.split()]


class TableLM:
    """Token probabilities looked up from a table; unknown tokens get ``default``."""

    def __init__(self, probs: dict[str, float], default: float = 0.5):
        self.probs = probs
        self.default = default

    def token_logprobs(self, text: str) -> list[tuple[str, float]]:
        return [(tok, math.log(self.probs.get(tok, self.default))) for tok in text.split()]
