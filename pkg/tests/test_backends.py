import json
import threading

import httpx
import numpy as np
import pytest

from tiermem.backends.base import embed_many
from tiermem.backends.http import Endpoint, HttpChatModel, HttpEmbedder, HttpTokenScorer
from tiermem.backends.mock import HashEmbedder, MockChat, MockScorer, _bucket, hash_embed
from tiermem.backends.responders import (
    echo_top_responder,
    merge_update_responder,
    overwrite_update_responder,
    rubric_judge_responder,
    summary_responder,
)
from tiermem.core import Phase
from tiermem.errors import (
    AuthError,
    BackendError,
    EmbedderError,
    MalformedResponse,
    RateLimited,
    ScorerError,
    UnsupportedBackend,
)
from tiermem.metering import UsageMeter, metered_complete
from tiermem.prompting import render_qa, render_summary, render_update
from tiermem.harness.judge import render_judge


def endpoint(**kw):
    return Endpoint(base_url="http://test.local/v1", api_key="k", model="m", **kw)


def chat_reply(text, usage=True, prompt_tokens=None):
    body = {"choices": [{"message": {"role": "assistant", "content": text}}]}
    if usage:
        body["usage"] = {"prompt_tokens": prompt_tokens or 0, "completion_tokens": len(text.split())}
    return body


def test_mock_scorer_is_deterministic():
    a, b = MockScorer(seed=4), MockScorer(seed=4)
    toks = "the same text twice".split()
    assert a.retention_scores(toks) == b.retention_scores(toks)
    assert np.array_equal(a.attention([toks[:2], toks[2:]], [8, 9]), b.attention([toks[:2], toks[2:]], [8, 9]))
    assert MockScorer(seed=5).retention_scores(toks) != a.retention_scores(toks)


def test_mock_scorer_empty_text():
    assert MockScorer().tokenize("") == []


def test_hash_embed_norm_and_identity():
    for text in ["", "a", "Hello, world! hello", "x" * 500]:
        v = hash_embed(text, 64)
        assert abs(np.linalg.norm(v) - 1) < 1e-6
    assert np.array_equal(hash_embed("same words", 32), hash_embed("same words", 32))


def test_hash_embed_disjoint_buckets_are_orthogonal():
    dim = 64
    used, picked = set(), []
    for i in range(200):
        tok = f"tok{i}"
        if _bucket(tok, dim) not in used:
            used.add(_bucket(tok, dim))
            picked.append(tok)
        if len(picked) == 4:
            break
    a = hash_embed(" ".join(picked[:2]), dim)
    b = hash_embed(" ".join(picked[2:]), dim)
    assert float(a @ b) == 0.0


def test_hash_embed_dimension_guard():
    with pytest.raises(ValueError):
        hash_embed("x", 1)


def test_embed_many_uses_batch_when_present():
    class Batchy(HashEmbedder):
        batches = 0

        def embed_batch(self, texts):
            self.batches += 1
            return np.vstack([self.embed(t) for t in texts])

    emb = Batchy(16)
    out = embed_many(emb, ["a", "b"])
    assert out.shape == (2, 16) and emb.batches == 1


def test_http_chat_usage_and_auth_header():
    seen = {}

    def handler(request):
        seen["auth"] = request.headers.get("authorization")
        prompt = json.loads(request.content)["messages"][0]["content"]
        return httpx.Response(200, json=chat_reply(prompt, prompt_tokens=len(prompt.split())))

    chat = HttpChatModel(endpoint(), transport=httpx.MockTransport(handler))
    resp = chat.complete("echo these five words")
    assert resp.text == "echo these five words"
    assert resp.input_tokens == 4 and resp.output_tokens == 4 and resp.attempts == 1
    assert seen["auth"] == "Bearer k"


def test_http_retries_429_then_succeeds():
    statuses = iter([429, 429, 429, 200])
    sleeps = []

    def handler(request):
        code = next(statuses)
        return httpx.Response(code, json=chat_reply("ok") if code == 200 else {"error": "slow"})

    chat = HttpChatModel(endpoint(max_retries=3, backoff=0.1), transport=httpx.MockTransport(handler),
                         sleep=sleeps.append)
    meter = UsageMeter()
    resp = metered_complete(chat, "hi", meter, Phase.SUMMARY)
    assert resp.attempts == 4 and len(chat.attempts) == 4
    assert [a.status for a in chat.attempts] == [429, 429, 429, 200]
    assert sleeps == pytest.approx([0.1, 0.2, 0.4])
    t = meter.totals(Phase.SUMMARY)
    assert t.calls == 1 and t.attempts == 4


def test_http_rate_limit_budget_exhausted():
    chat = HttpChatModel(endpoint(max_retries=2), transport=httpx.MockTransport(lambda r: httpx.Response(429)),
                         sleep=lambda s: None)
    with pytest.raises(RateLimited):
        chat.complete("hi")
    assert len(chat.attempts) == 3


def test_http_server_errors():
    chat = HttpChatModel(endpoint(max_retries=1), transport=httpx.MockTransport(lambda r: httpx.Response(503)),
                         sleep=lambda s: None)
    with pytest.raises(BackendError):
        chat.complete("hi")


def test_http_auth_error_not_retried():
    chat = HttpChatModel(endpoint(), transport=httpx.MockTransport(lambda r: httpx.Response(401)))
    with pytest.raises(AuthError):
        chat.complete("hi")
    assert len(chat.attempts) == 1


def test_http_non_json():
    chat = HttpChatModel(endpoint(), transport=httpx.MockTransport(lambda r: httpx.Response(200, text="<html>")))
    with pytest.raises(MalformedResponse):
        chat.complete("hi")


def test_http_missing_choices():
    chat = HttpChatModel(endpoint(), transport=httpx.MockTransport(lambda r: httpx.Response(200, json={})))
    with pytest.raises(MalformedResponse):
        chat.complete("hi")


def test_http_transport_failure():
    def handler(request):
        raise httpx.ConnectError("refused")

    chat = HttpChatModel(endpoint(max_retries=1), transport=httpx.MockTransport(handler), sleep=lambda s: None)
    with pytest.raises(BackendError):
        chat.complete("hi")


def test_http_missing_usage_is_approximated():
    chat = HttpChatModel(endpoint(), transport=httpx.MockTransport(
        lambda r: httpx.Response(200, json=chat_reply("two words", usage=False))))
    resp = chat.complete("three word prompt")
    assert (resp.input_tokens, resp.output_tokens) == (3, 2)


def test_http_logprobs():
    body = {"choices": [{"logprobs": {"tokens": ["a", "b"], "token_logprobs": [None, -0.5]}}]}
    chat = HttpChatModel(endpoint(), transport=httpx.MockTransport(lambda r: httpx.Response(200, json=body)))
    assert chat.token_logprobs("a b") == [("a", -0.5), ("b", -0.5)]
    bare = HttpChatModel(endpoint(), transport=httpx.MockTransport(
        lambda r: httpx.Response(200, json={"choices": [{"text": ""}]})))
    with pytest.raises(UnsupportedBackend):
        bare.token_logprobs("a b")


def test_http_embedder_normalizes_and_orders():
    def handler(request):
        return httpx.Response(200, json={"data": [
            {"index": 1, "embedding": [0.0, 2.0]},
            {"index": 0, "embedding": [3.0, 4.0]},
        ]})

    emb = HttpEmbedder(endpoint(), transport=httpx.MockTransport(handler))
    out = emb.embed_batch(["a", "b"])
    assert np.allclose(out, [[0.6, 0.8], [0.0, 1.0]])
    assert emb.dimension == 2


def test_http_embedder_errors():
    emb = HttpEmbedder(endpoint(max_retries=0), transport=httpx.MockTransport(lambda r: httpx.Response(500)),
                       sleep=lambda s: None)
    with pytest.raises(EmbedderError):
        emb.embed("a")


def test_http_token_scorer_shim():
    def handler(request):
        body = json.loads(request.content)
        path = request.url.path.rsplit("/", 1)[-1]
        if path == "tokenize":
            return httpx.Response(200, json={"tokens": body["text"].split()})
        if path == "score":
            return httpx.Response(200, json={"scores": [0.5] * len(body["tokens"])})
        T = sum(len(s) for s in body["sentences"])
        return httpx.Response(200, json={"attention": np.ones((len(body["layers"]), T, T)).tolist()})

    sc = HttpTokenScorer(endpoint(), transport=httpx.MockTransport(handler))
    assert sc.tokenize("a b c") == ["a", "b", "c"]
    assert sc.retention_scores(["a", "b"]) == [0.5, 0.5]
    assert sc.attention([["a"], ["b", "c"]], [8, 9]).shape == (2, 3, 3)
    broken = HttpTokenScorer(endpoint(), transport=httpx.MockTransport(lambda r: httpx.Response(200, json={})))
    with pytest.raises(ScorerError):
        broken.tokenize("a")


def test_endpoint_from_env():
    env = {"TIERMEM_CHAT_BASE_URL": "http://x/v1", "OPENAI_API_KEY": "fallback", "TIERMEM_CHAT_MODEL": "tiny"}
    ep = Endpoint.from_env("chat", env)
    assert (ep.base_url, ep.api_key, ep.model) == ("http://x/v1", "fallback", "tiny")


def test_transport_transparency():
    """A remote model returning the mock's replies gives the same results as the mock."""
    mock = MockChat(summary_responder)

    def handler(request):
        prompt = json.loads(request.content)["messages"][0]["content"]
        r = mock.complete(prompt)
        return httpx.Response(200, json={"choices": [{"message": {"content": r.text}}],
                                         "usage": {"prompt_tokens": r.input_tokens,
                                                   "completion_tokens": r.output_tokens}})

    remote = HttpChatModel(endpoint(), transport=httpx.MockTransport(handler))
    prompt = render_summary(["user: river bank walk", "user: moon light"])
    local = MockChat(summary_responder).complete(prompt)
    got = remote.complete(prompt)
    assert (got.text, got.input_tokens, got.output_tokens) == (local.text, local.input_tokens, local.output_tokens)


def test_mock_chat_counts_calls_across_threads():
    chat = MockChat(lambda p: "ok")
    threads = [threading.Thread(target=lambda: [chat.complete("x") for _ in range(100)]) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert chat.calls == 800


def test_summary_responder_one_line_per_segment():
    reply = summary_responder(render_summary(["[d] user: a b c", "[d] user: d e"]))
    assert reply.splitlines() == ["[1] SUMMARY: a b c", "[2] SUMMARY: d e"]


def test_update_responders():
    prompt = render_update("User is planning a trip to Tokyo.", ["User asks about trains to Kyoto."])
    assert merge_update_responder(prompt) == "User is planning a trip to Tokyo. + User asks about trains to Kyoto."
    assert overwrite_update_responder(prompt) == "User asks about trains to Kyoto."


def test_echo_top_and_abstain():
    assert echo_top_responder(render_qa([("Mon", "fact one"), ("Tue", "fact two")], "q?")) == "fact one"
    assert "don't know" in echo_top_responder(render_qa([], "q?"))


def test_rubric_judge_templates():
    temporal = render_judge("How many days?", "18 days", "It took 19 days.", "temporal-reasoning")
    assert rubric_judge_responder(temporal) == "yes"
    standard = render_judge("How many days?", "18 days", "It took 19 days.", "multi-session")
    assert rubric_judge_responder(standard) == "no"
    abst = render_judge("Paddle colour?", "never mentioned", "I don't know.", "abstention")
    assert rubric_judge_responder(abst) == "yes"
