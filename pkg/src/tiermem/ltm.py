"""Long-term memory: insert-only online phase, offline parallel consolidation.

On disk a store is a directory::

    manifest.json                  active generation, file names, count, dimension
    entries.g<gen>.r<rev>.jsonl    one JSON record per entry, insertion order
    embeddings.g<gen>.r<rev>.f32   little-endian float32 rows, same order as the records

Consolidation and full saves write fresh files and swap the manifest with an
atomic rename; online inserts append to the active files.
"""

from __future__ import annotations

import json
import logging
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .backends.base import ChatModel, Embedder, embed_many
from .core import Phase
from .errors import DuplicateId, EmptyStore, RangeError, TiermemError
from .metering import UsageMeter, metered_complete
from .prompting import render_update
from .stm import MemoryEntry

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"
STORE_SCHEMA = "ltm-store/1"


@dataclass(frozen=True)
class UpdateQueue:
    target_id: str
    sources: tuple[tuple[str, float], ...]
    generation: int = 0


class LtmStore:
    """Id-addressed, insertion-ordered entry collection.

    Readers get consistent copies under a lock, so retrieval can run while the
    single online writer inserts.
    """

    def __init__(self, entries: Iterable[MemoryEntry] = (), generation: int = 0):
        self._entries: dict[str, MemoryEntry] = {}
        self._lock = threading.RLock()
        self.generation = generation
        self.update_failures: dict[str, str] = {}
        for e in entries:
            self.insert(e)

    def insert(self, entry: MemoryEntry) -> LtmStore:
        with self._lock:
            if entry.entry_id in self._entries:
                raise DuplicateId(entry.entry_id)
            if self._entries:
                dim = next(iter(self._entries.values())).embedding.shape[0]
                if entry.embedding.shape[0] != dim:
                    raise ValueError(f"entry {entry.entry_id} has dimension {entry.embedding.shape[0]}, store has {dim}")
            self._entries[entry.entry_id] = entry
        return self

    def get(self, entry_id: str) -> MemoryEntry:
        with self._lock:
            return self._entries[entry_id]

    def __contains__(self, entry_id: str) -> bool:
        with self._lock:
            return entry_id in self._entries

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)

    def entries(self) -> list[MemoryEntry]:
        with self._lock:
            return list(self._entries.values())

    def retrieve_scored(self, query: str, embedder: Embedder, top_k: int) -> list[tuple[MemoryEntry, float]]:
        if top_k < 1:
            raise RangeError("top_k")
        entries = self.entries()
        if not entries:
            raise EmptyStore("the store holds no entries")
        q = np.asarray(embedder.embed(query), dtype=np.float64)
        q = q / np.linalg.norm(q)
        sims = np.vstack([e.embedding for e in entries]) @ q
        order = sorted(range(len(entries)), key=lambda i: (-sims[i], -entries[i].timestamp))
        return [(entries[i], float(sims[i])) for i in order[:top_k]]

    def retrieve(self, query: str, embedder: Embedder, top_k: int) -> list[MemoryEntry]:
        return [e for e, _ in self.retrieve_scored(query, embedder, top_k)]

    def serialize(self) -> bytes:
        """Canonical byte form: records, then float64 embeddings, then generation."""
        entries = self.entries()
        lines = [json.dumps(e.to_record(), sort_keys=True, ensure_ascii=False) for e in entries]
        vecs = b"".join(e.embedding.astype("<f8").tobytes() for e in entries)
        return "\n".join(lines).encode("utf-8") + b"\n--\n" + vecs + f"\n--\n{self.generation}".encode()

    # -- persistence ---------------------------------------------------------

    def save(self, directory: str | Path) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        manifest = _read_manifest(directory)
        rev = (manifest or {}).get("revision", -1) + 1
        stem = f"g{self.generation:06d}.r{rev:04d}"
        entries = self.entries()
        dim = entries[0].embedding.shape[0] if entries else (manifest or {}).get("dimension", 0)
        rec_path = directory / f"entries.{stem}.jsonl"
        emb_path = directory / f"embeddings.{stem}.f32"
        with open(rec_path, "w", encoding="utf-8") as fh:
            for e in entries:
                fh.write(json.dumps(e.to_record(), ensure_ascii=False) + "\n")
        with open(emb_path, "wb") as fh:
            for e in entries:
                fh.write(e.embedding.astype("<f4").tobytes())
        _write_manifest(directory, {
            "schema": STORE_SCHEMA,
            "generation": self.generation,
            "revision": rev,
            "entries": rec_path.name,
            "embeddings": emb_path.name,
            "count": len(entries),
            "dimension": int(dim),
        })
        return directory

    @classmethod
    def load(cls, directory: str | Path) -> LtmStore:
        directory = Path(directory)
        manifest = _read_manifest(directory)
        if manifest is None:
            raise FileNotFoundError(f"no {MANIFEST} in {directory}")
        count, dim = manifest["count"], manifest["dimension"]
        with open(directory / manifest["entries"], encoding="utf-8") as fh:
            records = [json.loads(line) for line in fh if line.strip()][:count]
        raw = np.fromfile(directory / manifest["embeddings"], dtype="<f4")
        if len(records) != count or raw.size < count * dim:
            raise ValueError(f"{directory}: store files are shorter than the manifest says")
        vecs = raw[: count * dim].reshape(count, dim).astype(np.float64)
        vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
        return cls((MemoryEntry.from_record(r, v) for r, v in zip(records, vecs)), manifest["generation"])

    @staticmethod
    def append_to(directory: str | Path, entry: MemoryEntry) -> None:
        """Append one entry to the active generation on disk (the online log)."""
        directory = Path(directory)
        manifest = _read_manifest(directory)
        if manifest is None:
            LtmStore([entry]).save(directory)
            return
        if manifest["count"] and manifest["dimension"] != entry.embedding.shape[0]:
            raise ValueError("embedding dimension differs from the stored entries")
        with open(directory / manifest["entries"], "a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry.to_record(), ensure_ascii=False) + "\n")
        with open(directory / manifest["embeddings"], "ab") as fh:
            fh.write(entry.embedding.astype("<f4").tobytes())
        manifest["count"] += 1
        manifest["dimension"] = int(entry.embedding.shape[0])
        _write_manifest(directory, manifest)


def _read_manifest(directory: Path) -> dict | None:
    path = directory / MANIFEST
    if not path.exists():
        return None
    return json.loads(path.read_text(encoding="utf-8"))


def _write_manifest(directory: Path, manifest: dict) -> None:
    tmp = directory / (MANIFEST + ".tmp")
    tmp.write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")
    os.replace(tmp, directory / MANIFEST)


def soft_insert(store: LtmStore, entry: MemoryEntry) -> LtmStore:
    return store.insert(entry)


def build_update_queues(store: LtmStore, k: int, n: int) -> list[UpdateQueue]:
    """For each entry, the ``k`` most similar entries no older than it, cut to ``n``.

    Ties order by similarity (desc), source timestamp (asc), source id (asc).
    """
    if k < 1:
        raise RangeError("queue_topk")
    if n < 1:
        raise RangeError("queue_length")
    entries = store.entries()
    if not entries:
        return []
    ids = [e.entry_id for e in entries]
    ts = np.array([e.timestamp for e in entries])
    E = np.vstack([e.embedding for e in entries])
    S = E @ E.T
    queues = []
    for i, e in enumerate(entries):
        cand = [j for j in np.nonzero(ts >= ts[i])[0] if j != i]
        cand.sort(key=lambda j: (-S[i, j], ts[j], ids[j]))
        picked = cand[:k][:n]
        queues.append(UpdateQueue(e.entry_id, tuple((ids[j], float(S[i, j])) for j in picked), store.generation))
    return queues


def consolidate(
    store: LtmStore,
    queues: Sequence[UpdateQueue],
    updater: ChatModel,
    embedder: Embedder,
    meter: UsageMeter | None = None,
    workers: int | None = None,
    prompt_dir=None,
) -> LtmStore:
    """One offline update pass; returns a new store one generation ahead.

    Every call reads only the pre-pass snapshot and rewrites only its own
    target, so any schedule (``workers=1`` or many) gives the same result.
    A failed or empty reply leaves that target unchanged and is listed in
    ``update_failures`` of the returned store.
    """
    snapshot = {e.entry_id: e for e in store.entries()}
    for q in queues:
        if q.generation != store.generation:
            raise ValueError(f"queue for {q.target_id} was built for generation {q.generation}")
        missing = [sid for sid, _ in q.sources if sid not in snapshot]
        if q.target_id not in snapshot or missing:
            raise KeyError(f"queue for {q.target_id} references unknown entries {missing}")
    work = [q for q in queues if q.sources]

    def run(q: UpdateQueue) -> tuple[str, str | None, str | None]:
        prompt = render_update(snapshot[q.target_id].summary, [snapshot[s].summary for s, _ in q.sources], prompt_dir)
        try:
            text = metered_complete(updater, prompt, meter, Phase.UPDATE).text.strip()
        except TiermemError as exc:
            return q.target_id, None, f"{type(exc).__name__}: {exc}"
        if not text:
            return q.target_id, None, "empty reply"
        return q.target_id, text, None

    ctx = meter.span(Phase.UPDATE) if meter is not None else _null()
    with ctx:
        if workers == 1 or len(work) <= 1:
            results = [run(q) for q in work]
        else:
            with ThreadPoolExecutor(max_workers=workers or min(32, len(work))) as pool:
                results = list(pool.map(run, work))
        revised = {tid: text for tid, text, err in results if text is not None}
        failures = {tid: err for tid, _, err in results if err is not None}
        changed = [tid for tid in snapshot if tid in revised and revised[tid] != snapshot[tid].summary]
        vectors = embed_many(embedder, [revised[tid] for tid in changed]) if changed else []
    new_vecs = dict(zip(changed, vectors))
    for tid, err in failures.items():
        logger.warning("update for %s failed: %s", tid, err)
    out = LtmStore(
        (snapshot[i].revised(revised[i], new_vecs[i] / np.linalg.norm(new_vecs[i])) if i in new_vecs else snapshot[i]
         for i in snapshot),
        generation=store.generation + 1,
    )
    out.update_failures = failures
    return out


class _null:
    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False


def retrieve(store: LtmStore, query: str, embedder: Embedder, top_k: int) -> list[MemoryEntry]:
    return store.retrieve(query, embedder, top_k)
