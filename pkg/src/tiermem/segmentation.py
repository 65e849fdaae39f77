"""Sensory buffer and hybrid topic segmentation.

Only user sentences feed boundary detection; each assistant reply travels
with its turn. A boundary at ``k`` means sentence ``k`` opens a new segment.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .backends.base import Embedder, TokenScorer, embed_many
from .core import Turn
from .errors import EmbedderError, EmptyInput, ScorerError, TiermemError
from .sensory import CompressedText


@dataclass(frozen=True)
class CompressedTurn:
    turn: Turn
    user: CompressedText
    assistant: CompressedText

    @property
    def token_count(self) -> int:
        return self.user.token_count + self.assistant.token_count


@dataclass(frozen=True, eq=False)
class AttentionMatrix:
    values: np.ndarray

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def subdiagonal(self) -> list[float]:
        """``[M[k][k-1] for k in 1..n-1]``."""
        return [float(self.values[k, k - 1]) for k in range(1, self.n)]


class BoundaryKind(str, Enum):
    ATTENTION = "attention"
    SIMILARITY = "similarity"
    HYBRID = "hybrid"


@dataclass(frozen=True)
class BoundarySet:
    kind: BoundaryKind
    positions: tuple[int, ...]

    def __and__(self, other: BoundarySet) -> BoundarySet:
        return BoundarySet(BoundaryKind.HYBRID, tuple(sorted(set(self.positions) & set(other.positions))))


@dataclass(frozen=True)
class TopicSegment:
    topic_id: str
    turns: tuple[CompressedTurn, ...]

    def __post_init__(self):
        if not self.turns:
            raise ValueError("a topic segment needs at least one turn")

    @property
    def token_count(self) -> int:
        return sum(t.token_count for t in self.turns)


@dataclass
class SensoryBuffer:
    capacity: int
    pending: list[CompressedTurn] = field(default_factory=list)

    @property
    def token_count(self) -> int:
        return sum(ct.user.token_count for ct in self.pending)

    def fits(self, ct: CompressedTurn) -> bool:
        return self.token_count + ct.user.token_count <= self.capacity


def build_attention_matrix(
    user_sentences: Sequence[CompressedText],
    scorer: TokenScorer,
    layers: Sequence[int] = (8, 9, 10, 11),
    sink_mask_width: int = 3,
) -> AttentionMatrix:
    """Sentence-level causal attention, row-normalized over strict predecessors.

    Per layer, the first and last ``sink_mask_width`` tokens of the packed
    sequence are removed as attention keys and each token row is renormalized;
    sentence-to-sentence scores are means over the remaining token pairs,
    averaged across ``layers``. A row with no surviving mass becomes uniform.
    """
    n = len(user_sentences)
    if n == 0:
        raise EmptyInput("no sentences")
    if n == 1:
        return AttentionMatrix(np.zeros((1, 1)))
    token_lists = [list(s.tokens) for s in user_sentences]
    lens = np.array([len(t) for t in token_lists])
    T = int(lens.sum())
    window = getattr(scorer, "context_window", None)
    if window is not None and T > window:
        raise ScorerError(f"{T} packed tokens exceed the scorer context window of {window}")

    S = np.zeros((n, n))
    if T:
        try:
            A = np.array(scorer.attention(token_lists, list(layers)), dtype=np.float64)
        except TiermemError:
            raise
        except Exception as exc:  # noqa: BLE001 - backend boundary
            raise ScorerError(f"attention backend failed: {exc!r}") from exc
        if A.shape != (len(layers), T, T):
            raise ScorerError(f"attention has shape {A.shape}, expected {(len(layers), T, T)}")
        keep = np.ones(T, dtype=bool)
        if sink_mask_width:
            keep[:sink_mask_width] = False
            keep[max(0, T - sink_mask_width):] = False
        A[:, :, ~keep] = 0.0
        sums = A.sum(axis=2, keepdims=True)
        A = np.divide(A, sums, out=np.zeros_like(A), where=sums > 0)

        sent_of = np.repeat(np.arange(n), lens)
        P = np.zeros((n, T))
        P[sent_of[keep], np.nonzero(keep)[0]] = 1.0
        counts = P.sum(axis=1, keepdims=True)
        P = np.divide(P, counts, out=np.zeros_like(P), where=counts > 0)
        S = np.mean([P @ A[i] @ P.T for i in range(A.shape[0])], axis=0)

    M = np.tril(S, -1)
    for k in range(1, n):
        total = M[k, :k].sum()
        M[k, :k] = M[k, :k] / total if total > 0 else 1.0 / k
    return AttentionMatrix(M)


def attention_boundaries(M: AttentionMatrix) -> BoundarySet:
    """Strict local maxima of the sub-diagonal ``M[k][k-1]``; needs both neighbours."""
    v = M.values
    found = [
        k
        for k in range(2, M.n - 1)
        if v[k, k - 1] > v[k - 1, k - 2] and v[k, k - 1] > v[k + 1, k]
    ]
    return BoundarySet(BoundaryKind.ATTENTION, tuple(found))


def adjacent_similarities(user_sentences: Sequence[CompressedText], embedder: Embedder) -> list[float]:
    """Cosine similarity of each sentence with its predecessor, for k = 1..n-1."""
    if len(user_sentences) < 2:
        return []
    try:
        E = embed_many(embedder, [s.text for s in user_sentences])
    except TiermemError:
        raise
    except Exception as exc:  # noqa: BLE001 - backend boundary
        raise EmbedderError(f"embedding backend failed: {exc!r}") from exc
    norms = np.linalg.norm(E, axis=1)
    if np.any(norms == 0):
        raise EmbedderError("embedder returned a zero vector")
    E = E / norms[:, None]
    return [float(E[k - 1] @ E[k]) for k in range(1, len(E))]


def similarity_boundaries(
    user_sentences: Sequence[CompressedText], embedder: Embedder, tau_sim: float
) -> BoundarySet:
    sims = adjacent_similarities(user_sentences, embedder)
    return BoundarySet(BoundaryKind.SIMILARITY, tuple(k for k, s in enumerate(sims, 1) if s < tau_sim))


@dataclass
class BoundaryReport:
    """Everything computed for one buffer, kept for the segmentation debug dump."""

    turn_ids: list[int]
    matrix: AttentionMatrix | None = None
    similarities: list[float] | None = None
    attention: BoundarySet | None = None
    similarity: BoundarySet | None = None
    hybrid: BoundarySet | None = None

    def positions(self, mode: str) -> tuple[int, ...]:
        chosen = {"attention": self.attention, "similarity": self.similarity, "hybrid": self.hybrid}[mode]
        if chosen is None:
            raise ValueError(f"mode {mode!r} was not computed")
        return chosen.positions

    def to_json(self) -> dict:
        def pos(b):
            return None if b is None else list(b.positions)

        return {
            "turn_ids": self.turn_ids,
            "attention_matrix": None if self.matrix is None else self.matrix.values.tolist(),
            "similarities": self.similarities,
            "B1": pos(self.attention),
            "B2": pos(self.similarity),
            "B": pos(self.hybrid),
        }


def detect_boundaries(
    buffer: SensoryBuffer,
    scorer: TokenScorer,
    embedder: Embedder,
    tau_sim: float,
    layers: Sequence[int] = (8, 9, 10, 11),
    sink_mask_width: int = 3,
    mode: str = "hybrid",
) -> BoundaryReport:
    sentences = [ct.user for ct in buffer.pending]
    report = BoundaryReport(turn_ids=[ct.turn.turn_id for ct in buffer.pending])
    if mode in ("attention", "hybrid"):
        report.matrix = build_attention_matrix(sentences, scorer, layers, sink_mask_width)
        report.attention = attention_boundaries(report.matrix)
    if mode in ("similarity", "hybrid"):
        report.similarities = adjacent_similarities(sentences, embedder)
        report.similarity = BoundarySet(
            BoundaryKind.SIMILARITY,
            tuple(k for k, s in enumerate(report.similarities, 1) if s < tau_sim),
        )
    if mode == "hybrid":
        report.hybrid = report.attention & report.similarity
    return report


def _segment(turns: Sequence[CompressedTurn]) -> TopicSegment:
    return TopicSegment(f"t{turns[0].turn.turn_id:06d}", tuple(turns))


def cut_buffer(
    buffer: SensoryBuffer, positions: Sequence[int], forced: bool
) -> tuple[list[TopicSegment], SensoryBuffer]:
    """Split at ``positions``; the tail after the last cut is residual unless ``forced``."""
    turns = buffer.pending
    cuts = sorted(p for p in set(positions) if 0 < p < len(turns))
    if not turns:
        return [], SensoryBuffer(buffer.capacity)
    if not cuts:
        if forced:
            return [_segment(turns)], SensoryBuffer(buffer.capacity)
        return [], SensoryBuffer(buffer.capacity, list(turns))
    edges = [0, *cuts]
    segments = [_segment(turns[a:b]) for a, b in zip(edges, edges[1:])]
    tail = turns[cuts[-1]:]
    if forced:
        segments.append(_segment(tail))
        return segments, SensoryBuffer(buffer.capacity)
    return segments, SensoryBuffer(buffer.capacity, list(tail))


def segment_buffer(
    buffer: SensoryBuffer,
    scorer: TokenScorer,
    embedder: Embedder,
    tau_sim: float,
    *,
    layers: Sequence[int] = (8, 9, 10, 11),
    sink_mask_width: int = 3,
    mode: str = "hybrid",
    forced: bool = False,
) -> tuple[list[TopicSegment], SensoryBuffer]:
    report = detect_boundaries(buffer, scorer, embedder, tau_sim, layers, sink_mask_width, mode)
    return cut_buffer(buffer, report.positions(mode), forced)


class Segmenter:
    """Drives the sensory buffer turn by turn.

    A turn that would overflow the buffer first triggers segmentation of the
    current contents. If the residual still leaves no room, it is emitted
    whole, so boundary detection never sees more than ``capacity`` tokens.
    """

    def __init__(self, cfg, scorer: TokenScorer, embedder: Embedder, keep_trace: bool = False):
        self.cfg = cfg
        self.scorer = scorer
        self.embedder = embedder
        self.buffer = SensoryBuffer(cfg.sensory_buffer_capacity)
        self.detected: list[int] = []
        self.overflow_cuts = 0
        self.trace: list[BoundaryReport] | None = [] if keep_trace else None

    def _run(self, forced: bool) -> list[TopicSegment]:
        mode = self.cfg.segmentation_mode
        report = detect_boundaries(
            self.buffer,
            self.scorer,
            self.embedder,
            self.cfg.similarity_threshold,
            self.cfg.attention_layers,
            self.cfg.sink_mask_width,
            mode,
        )
        if self.trace is not None:
            self.trace.append(report)
        positions = report.positions(mode)
        self.detected.extend(report.turn_ids[p] for p in positions)
        segments, self.buffer = cut_buffer(self.buffer, positions, forced)
        return segments

    def push(self, ct: CompressedTurn) -> list[TopicSegment]:
        out: list[TopicSegment] = []
        if self.buffer.pending and not self.buffer.fits(ct):
            out.extend(self._run(forced=False))
            if self.buffer.pending and not self.buffer.fits(ct):
                out.append(_segment(self.buffer.pending))
                self.buffer = SensoryBuffer(self.buffer.capacity)
                self.overflow_cuts += 1
        self.buffer.pending.append(ct)
        return out

    def finish(self) -> list[TopicSegment]:
        if not self.buffer.pending:
            return []
        return self._run(forced=True)

    def dump_trace(self) -> str:
        return json.dumps([r.to_json() for r in self.trace or []], indent=2)
