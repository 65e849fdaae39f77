import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tiermem.backends.mock import HashEmbedder, MockScorer, planted_profile
from tiermem.core import PipelineConfig
from tiermem.errors import EmptyInput, ScorerError
from tiermem.segmentation import (
    AttentionMatrix,
    BoundaryKind,
    BoundarySet,
    SensoryBuffer,
    Segmenter,
    attention_boundaries,
    build_attention_matrix,
    cut_buffer,
    detect_boundaries,
    segment_buffer,
    similarity_boundaries,
)
from tiermem.sensory import compress_text

from tests.helpers import TableEmbedder, cturn


def sentences(lengths, scorer=None):
    scorer = scorer or MockScorer()
    out, k = [], 0
    for n in lengths:
        out.append(compress_text(" ".join(f"w{k + i}" for i in range(n)), scorer, 1.0))
        k += n
    return out


class UniformAttention(MockScorer):
    def attention(self, sents, layers):
        T = sum(len(s) for s in sents)
        return np.ones((len(layers), T, T))


class RandomAttention(MockScorer):
    def __init__(self, seed):
        super().__init__(context_window=10_000)
        self.rng = np.random.default_rng(seed)

    def attention(self, sents, layers):
        T = sum(len(s) for s in sents)
        return self.rng.random((len(layers), T, T))


def oracle_matrix(lengths, A, width):
    """Token loops, written independently of the vectorized implementation."""
    T = sum(lengths)
    owner = [s for s, n in enumerate(lengths) for _ in range(n)]
    masked = {i for i in range(T) if i < width or i >= T - width}
    n = len(lengths)
    layer_mats = []
    for L in range(A.shape[0]):
        S = [[0.0] * n for _ in range(n)]
        for a in range(n):
            for b in range(n):
                vals = []
                for q in range(T):
                    if owner[q] != a or q in masked:
                        continue
                    row_total = sum(A[L, q, key] for key in range(T) if key not in masked)
                    for key in range(T):
                        if owner[key] == b and key not in masked:
                            vals.append(A[L, q, key] / row_total if row_total else 0.0)
                S[a][b] = sum(vals) / len(vals) if vals else 0.0
        layer_mats.append(S)
    avg = [[sum(m[a][b] for m in layer_mats) / len(layer_mats) for b in range(n)] for a in range(n)]
    M = [[0.0] * n for _ in range(n)]
    for k in range(1, n):
        tot = sum(avg[k][:k])
        for j in range(k):
            M[k][j] = avg[k][j] / tot if tot else 1.0 / k
    return np.array(M)


def test_single_sentence_gives_zero_matrix():
    M = build_attention_matrix(sentences([4]), MockScorer())
    assert M.values.shape == (1, 1) and M.values[0, 0] == 0


def test_no_sentences():
    with pytest.raises(EmptyInput):
        build_attention_matrix([], MockScorer())


def test_uniform_attention_rows():
    M = build_attention_matrix(sentences([5, 5, 5]), UniformAttention())
    assert M.values[2].tolist() == pytest.approx([0.5, 0.5, 0.0])
    assert M.values[1].tolist() == pytest.approx([1.0, 0.0, 0.0])


@pytest.mark.parametrize("seed", range(5))
def test_matches_token_loop_oracle(seed):
    rng = np.random.default_rng(100 + seed)
    lengths = [int(x) for x in rng.integers(1, 5, size=int(rng.integers(2, 6)))]
    scorer = RandomAttention(seed)
    A = np.random.default_rng(seed).random((2, sum(lengths), sum(lengths)))
    scorer.attention = lambda sents, layers: A
    got = build_attention_matrix(sentences(lengths), scorer, layers=(0, 1), sink_mask_width=1)
    assert np.allclose(got.values, oracle_matrix(lengths, A, 1), atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 6), min_size=1, max_size=12), st.integers(0, 3), st.integers(0, 1000))
def test_rows_are_causal_and_normalized(lengths, width, seed):
    M = build_attention_matrix(sentences(lengths), RandomAttention(seed), sink_mask_width=width).values
    n = len(lengths)
    assert np.all(M >= 0)
    assert np.all(np.triu(M) == 0)
    for k in range(1, n):
        assert math.isclose(M[k, :k].sum(), 1.0, abs_tol=1e-9)


def test_context_window_enforced():
    with pytest.raises(ScorerError):
        build_attention_matrix(sentences([300, 300]), MockScorer(context_window=512))


def test_bad_layer_surfaces_as_scorer_error():
    with pytest.raises(ScorerError):
        build_attention_matrix(sentences([3, 3]), MockScorer(num_layers=4), layers=(8,))


def subdiag_matrix(d):
    n = len(d) + 1
    M = np.zeros((n, n))
    for k in range(1, n):
        M[k, k - 1] = d[k - 1]
    return AttentionMatrix(M)


def peak_oracle(d):
    # d[k-1] = M[k][k-1]; peaks need both neighbours inside the sequence
    return tuple(k for k in range(2, len(d)) if d[k - 1] > d[k - 2] and d[k - 1] > d[k])


def test_worked_peak_example():
    assert attention_boundaries(subdiag_matrix([0.1, 0.4, 0.2, 0.3])).positions == (2,)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_too_small_for_peaks(n):
    assert attention_boundaries(AttentionMatrix(np.tril(np.ones((n, n)), -1))).positions == ()


def test_plateau_is_not_a_peak():
    assert attention_boundaries(subdiag_matrix([0.1, 0.5, 0.5, 0.1])).positions == ()


@settings(max_examples=200)
@given(st.lists(st.integers(0, 5).map(float), min_size=0, max_size=20))
def test_peaks_match_scan_oracle(d):
    assert attention_boundaries(subdiag_matrix(d)).positions == peak_oracle(d)


def test_planted_profile_recovers_peaks():
    lengths = [4] * 13
    M = build_attention_matrix(sentences(lengths), MockScorer(profile=planted_profile({5, 8, 11})))
    assert attention_boundaries(M).positions == (5, 8, 11)


def circle_embedder(texts, sims):
    angles = [0.0]
    for s in sims:
        angles.append(angles[-1] + math.acos(s))
    return TableEmbedder({t: [math.cos(a), math.sin(a)] for t, a in zip(texts, angles)})


def test_similarity_worked_example():
    sents = sentences([2, 2, 2, 2])
    emb = circle_embedder([s.text for s in sents], [0.9, 0.1, 0.8])
    assert similarity_boundaries(sents, emb, 0.5).positions == (2,)


def test_identical_and_orthogonal_sentences():
    same = [compress_text("hello there", MockScorer(), 1.0)] * 2
    assert similarity_boundaries(same, HashEmbedder(), 1.0).positions == ()
    emb = TableEmbedder({"a": [1, 0], "b": [0, 1]})
    pair = [compress_text("a", MockScorer(), 1.0), compress_text("b", MockScorer(), 1.0)]
    assert similarity_boundaries(pair, emb, 0.5).positions == (1,)


def test_intersection_and_carry():
    b1 = BoundarySet(BoundaryKind.ATTENTION, (3, 7))
    b2 = BoundarySet(BoundaryKind.SIMILARITY, (3, 9))
    both = b1 & b2
    assert both.kind is BoundaryKind.HYBRID and both.positions == (3,)
    buf = SensoryBuffer(512, [cturn(i, f"u{i}") for i in range(12)])
    segs, residual = cut_buffer(buf, both.positions, forced=False)
    assert [t.turn.turn_id for t in segs[0].turns] == [0, 1, 2]
    assert [t.turn.turn_id for t in residual.pending] == list(range(3, 12))


def test_forced_flush_with_no_boundaries():
    buf = SensoryBuffer(512, [cturn(i, f"u{i}") for i in range(4)])
    segs, residual = cut_buffer(buf, (), forced=True)
    assert len(segs) == 1 and len(segs[0].turns) == 4 and not residual.pending
    segs, residual = cut_buffer(buf, (), forced=False)
    assert segs == [] and len(residual.pending) == 4


def test_planted_hybrid_cut():
    # 13 turns: attention peaks {5, 8, 11}; only 5 and 11 are also dissimilar
    texts = [f"topic{i} words here" for i in range(13)]
    sims = [0.9] * 12
    sims[4] = 0.1   # pair (4, 5)
    sims[10] = 0.2  # pair (10, 11)
    emb = circle_embedder(texts, sims)
    scorer = MockScorer(profile=planted_profile({5, 8, 11}))
    buf = SensoryBuffer(512, [cturn(i, t) for i, t in enumerate(texts)])
    report = detect_boundaries(buf, scorer, emb, 0.5)
    assert report.attention.positions == (5, 8, 11)
    assert report.similarity.positions == (5, 11)
    segs, residual = segment_buffer(buf, scorer, emb, 0.5)
    assert [[t.turn.turn_id for t in s.turns][0] for s in segs] == [0, 5]
    assert [t.turn.turn_id for t in residual.pending] == [11, 12]
    dump = report.to_json()
    assert dump["B1"] == [5, 8, 11] and dump["B2"] == [5, 11] and dump["B"] == [5, 11]
    json.dumps(dump)


@settings(max_examples=100)
@given(st.integers(1, 20), st.lists(st.integers(-2, 22)), st.booleans())
def test_cutting_conserves_turns(n, positions, forced):
    buf = SensoryBuffer(512, [cturn(i, f"u{i}") for i in range(n)])
    segs, residual = cut_buffer(buf, positions, forced)
    rebuilt = [t.turn.turn_id for s in segs for t in s.turns] + [t.turn.turn_id for t in residual.pending]
    assert rebuilt == list(range(n))
    if forced:
        assert not residual.pending


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 5).map(float), min_size=3, max_size=15), st.floats(0, 1), st.integers(0, 50))
def test_hybrid_is_subset_of_both(profile_vals, tau, seed):
    n = len(profile_vals)
    scorer = MockScorer(seed=seed, profile=lambda s: profile_vals[: len(s)])
    buf = SensoryBuffer(512, [cturn(i, f"alpha{i % 3} beta{(i * seed) % 4} gamma") for i in range(n)])
    rep = detect_boundaries(buf, scorer, HashEmbedder(64), tau)
    h, a, s = set(rep.hybrid.positions), set(rep.attention.positions), set(rep.similarity.positions)
    assert h == a & s
    assert len(h) <= min(len(a), len(s))
    assert all(1 <= k <= n - 1 for k in a | s)


def stream(n, words_per_turn, seed=0):
    rng = np.random.default_rng(seed)
    for i in range(n):
        k = int(rng.integers(1, words_per_turn + 1))
        yield cturn(i, " ".join(f"x{int(v)}" for v in rng.integers(0, 30, size=k)))


@pytest.mark.parametrize("mode", ["attention", "similarity", "hybrid"])
def test_segmenter_conserves_and_respects_capacity(mode):
    cfg = PipelineConfig(sensory_buffer_capacity=40, segmentation_mode=mode, similarity_threshold=0.3)
    seg = Segmenter(cfg, MockScorer(context_window=40), HashEmbedder(64), keep_trace=True)
    out = []
    for ct in stream(120, 12):
        out.extend(seg.push(ct))
        assert seg.buffer.token_count <= 40
    out.extend(seg.finish())
    ids = [t.turn.turn_id for s in out for t in s.turns]
    assert ids == list(range(120))
    assert all(s.topic_id == f"t{s.turns[0].turn.turn_id:06d}" for s in out)
    assert json.loads(seg.dump_trace())


def test_segmenter_overflow_cut_without_boundaries():
    cfg = PipelineConfig(sensory_buffer_capacity=10, segmentation_mode="similarity", similarity_threshold=0.0)
    seg = Segmenter(cfg, MockScorer(), HashEmbedder())
    emitted = []
    for i in range(6):
        emitted.extend(seg.push(cturn(i, "same words again here")))
    assert seg.overflow_cuts >= 1
    assert all(len(s.turns) == 2 for s in emitted)


def test_finish_on_empty_segmenter():
    assert Segmenter(PipelineConfig(), MockScorer(), HashEmbedder()).finish() == []
