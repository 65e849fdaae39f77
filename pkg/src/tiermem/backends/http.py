"""HTTP clients for OpenAI-compatible chat/embedding services and a token-scorer shim.

Endpoints come from environment variables per role (``SCORER``, ``EMBEDDER``,
``CHAT``, ``JUDGE``)::

    TIERMEM_<ROLE>_BASE_URL, TIERMEM_<ROLE>_API_KEY, TIERMEM_<ROLE>_MODEL

falling back to ``OPENAI_BASE_URL`` / ``OPENAI_API_KEY`` when unset.
"""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass
from typing import Any, Callable, Sequence

import httpx
import numpy as np

from ..errors import (
    AuthError,
    BackendError,
    EmbedderError,
    MalformedResponse,
    RateLimited,
    ScorerError,
    UnsupportedBackend,
)
from .base import ChatResponse

logger = logging.getLogger(__name__)

DEFAULT_BASE_URL = "https://api.openai.com/v1"


@dataclass
class Endpoint:
    base_url: str
    api_key: str = ""
    model: str = ""
    timeout: float = 60.0
    max_retries: int = 3
    backoff: float = 0.5

    @classmethod
    def from_env(cls, role: str, env: dict[str, str] | None = None, **overrides) -> Endpoint:
        env = os.environ if env is None else env
        prefix = f"TIERMEM_{role.upper()}_"
        base = env.get(prefix + "BASE_URL") or env.get("OPENAI_BASE_URL") or DEFAULT_BASE_URL
        key = env.get(prefix + "API_KEY") or env.get("OPENAI_API_KEY", "")
        model = env.get(prefix + "MODEL", "")
        return cls(base_url=base, api_key=key, model=model, **overrides)


@dataclass
class Attempt:
    path: str
    status: int | None
    error: str = ""


class _HttpClient:
    def __init__(
        self,
        endpoint: Endpoint,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.endpoint = endpoint
        headers = {"Authorization": f"Bearer {endpoint.api_key}"} if endpoint.api_key else {}
        self._client = httpx.Client(
            base_url=endpoint.base_url.rstrip("/") + "/",
            headers=headers,
            timeout=endpoint.timeout,
            transport=transport,
        )
        self._sleep = sleep
        self.attempts: list[Attempt] = []

    def close(self):
        self._client.close()

    def post(self, path: str, payload: dict[str, Any]) -> tuple[dict[str, Any], int]:
        """POST with bounded exponential-backoff retries; returns (json, attempts used)."""
        budget = self.endpoint.max_retries
        for attempt in range(budget + 1):
            try:
                resp = self._client.post(path, json=payload)
            except httpx.TransportError as exc:
                self.attempts.append(Attempt(path, None, repr(exc)))
                logger.warning("POST %s attempt %d failed: %r", path, attempt + 1, exc)
                if attempt == budget:
                    raise BackendError(f"{path}: transport failure after {attempt + 1} attempts") from exc
                self._sleep(self.endpoint.backoff * 2**attempt)
                continue
            self.attempts.append(Attempt(path, resp.status_code))
            if resp.status_code in (401, 403):
                raise AuthError(f"{path}: HTTP {resp.status_code}")
            if resp.status_code == 429 or resp.status_code >= 500:
                logger.warning("POST %s attempt %d: HTTP %d", path, attempt + 1, resp.status_code)
                if attempt == budget:
                    cls = RateLimited if resp.status_code == 429 else BackendError
                    raise cls(f"{path}: HTTP {resp.status_code} after {attempt + 1} attempts")
                self._sleep(self.endpoint.backoff * 2**attempt)
                continue
            if resp.status_code >= 400:
                raise BackendError(f"{path}: HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                data = resp.json()
            except ValueError as exc:
                raise MalformedResponse(f"{path}: response is not JSON") from exc
            if not isinstance(data, dict):
                raise MalformedResponse(f"{path}: expected a JSON object")
            return data, attempt + 1
        raise AssertionError("unreachable")


class HttpChatModel(_HttpClient):
    """Chat completions client; one provider request per :meth:`complete`."""

    def __init__(self, endpoint: Endpoint, temperature: float = 0.0, **kwargs):
        super().__init__(endpoint, **kwargs)
        self.temperature = temperature

    def complete(self, prompt: str) -> ChatResponse:
        payload = {
            "model": self.endpoint.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.temperature,
        }
        data, attempts = self.post("chat/completions", payload)
        try:
            text = data["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError) as exc:
            raise MalformedResponse("chat/completions: missing choices[0].message.content") from exc
        usage = data.get("usage") or {}
        try:
            n_in = int(usage["prompt_tokens"])
            n_out = int(usage["completion_tokens"])
        except (KeyError, TypeError, ValueError):
            logger.warning("chat/completions: no usage block, approximating token counts")
            n_in, n_out = len(prompt.split()), len(text.split())
        return ChatResponse(text=text, input_tokens=n_in, output_tokens=n_out, attempts=attempts)

    def token_logprobs(self, text: str) -> list[tuple[str, float]]:
        """Prompt-token log-probabilities via the legacy completions echo mode."""
        payload = {"model": self.endpoint.model, "prompt": text, "max_tokens": 0, "echo": True, "logprobs": 0}
        data, _ = self.post("completions", payload)
        try:
            lp = data["choices"][0]["logprobs"]
            tokens, values = lp["tokens"], lp["token_logprobs"]
        except (KeyError, IndexError, TypeError) as exc:
            raise UnsupportedBackend("backend does not return prompt log-probabilities") from exc
        if tokens is None or values is None or len(tokens) != len(values):
            raise UnsupportedBackend("backend does not return prompt log-probabilities")
        known = [v for v in values if v is not None]
        # the first token has no context; treat it as the least predictable one
        floor = min(known) if known else 0.0
        return [(t, floor if v is None else float(v)) for t, v in zip(tokens, values)]


class HttpEmbedder(_HttpClient):
    def __init__(self, endpoint: Endpoint, dimension: int | None = None, **kwargs):
        super().__init__(endpoint, **kwargs)
        self.dimension = dimension or 0

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray:
        if not texts:
            return np.zeros((0, self.dimension))
        try:
            data, _ = self.post("embeddings", {"model": self.endpoint.model, "input": list(texts)})
            rows = sorted(data["data"], key=lambda d: d["index"])
            mat = np.asarray([r["embedding"] for r in rows], dtype=np.float64)
        except BackendError as exc:
            raise EmbedderError(str(exc)) from exc
        except (KeyError, TypeError, ValueError) as exc:
            raise EmbedderError("embeddings: malformed response") from exc
        if mat.shape[0] != len(texts):
            raise EmbedderError(f"embeddings: expected {len(texts)} vectors, got {mat.shape[0]}")
        if not self.dimension:
            self.dimension = mat.shape[1]
        if mat.shape[1] != self.dimension:
            raise EmbedderError(f"embeddings: dimension {mat.shape[1]} != declared {self.dimension}")
        norms = np.linalg.norm(mat, axis=1, keepdims=True)
        if np.any(norms == 0):
            raise EmbedderError("embeddings: zero vector returned")
        return mat / norms

    def embed(self, text: str) -> np.ndarray:
        return self.embed_batch([text])[0]


class HttpTokenScorer(_HttpClient):
    """Client for an out-of-process compressor shim.

    Wire format (JSON over POST)::

        tokenize   {"text": str}                          -> {"tokens": [str]}
        score      {"tokens": [str]}                      -> {"scores": [float]}
        attention  {"sentences": [[str]], "layers": [int]} -> {"attention": [[[float]]]}
    """

    def __init__(self, endpoint: Endpoint, context_window: int = 512, **kwargs):
        super().__init__(endpoint, **kwargs)
        self.context_window = context_window

    def _call(self, path: str, payload: dict[str, Any], key: str):
        try:
            data, _ = self.post(path, payload)
            return data[key]
        except BackendError as exc:
            raise ScorerError(str(exc)) from exc
        except KeyError as exc:
            raise ScorerError(f"{path}: response lacks {key!r}") from exc

    def tokenize(self, text: str) -> list[str]:
        return [str(t) for t in self._call("tokenize", {"text": text}, "tokens")]

    def retention_scores(self, tokens: Sequence[str]) -> list[float]:
        scores = [float(s) for s in self._call("score", {"tokens": list(tokens)}, "scores")]
        if len(scores) != len(tokens):
            raise ScorerError("score: length mismatch")
        return scores

    def attention(self, sentences: Sequence[Sequence[str]], layers: Sequence[int]) -> np.ndarray:
        raw = self._call("attention", {"sentences": [list(s) for s in sentences], "layers": list(layers)}, "attention")
        arr = np.asarray(raw, dtype=np.float64)
        total = sum(len(s) for s in sentences)
        if arr.shape != (len(layers), total, total):
            raise ScorerError(f"attention: unexpected shape {arr.shape}")
        return arr
