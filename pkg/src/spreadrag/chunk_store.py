"""Flat chunk index for the embedding-only retrieval baseline.

Stores text chunks with unit-norm embeddings and answers top-k cosine
queries.  Snapshot format mirrors the graph store: line-delimited JSON
with a header and a trailer.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np

from .errors import Conflict, ParseError
from .gateway import NORM_TOLERANCE

logger = logging.getLogger(__name__)

SNAPSHOT_FORMAT = "spreadrag-chunks"
SNAPSHOT_VERSION = 1


@dataclass
class StoredChunk:
    id: str
    source_id: str
    chunk_index: int
    text: str
    embedding: np.ndarray


class ChunkStore:
    def __init__(self):
        self.chunks: dict[str, StoredChunk] = {}
        self.dim: int | None = None
        self._counter = 0
        self._keys: dict[tuple[str, int], str] = {}

    def __len__(self) -> int:
        return len(self.chunks)

    def add(self, source_id: str, chunk_index: int, text: str, embedding) -> str:
        key = (source_id, int(chunk_index))
        if key in self._keys:
            raise Conflict(f"chunk ({source_id!r}, {chunk_index}) already stored")
        vec = np.asarray(embedding, dtype=np.float64)
        if vec.ndim != 1:
            raise ValueError(f"embedding must be a vector, got shape {vec.shape}")
        if self.dim is not None and vec.shape[0] != self.dim:
            raise ValueError(f"embedding dimension {vec.shape[0]} != store dimension {self.dim}")
        norm = float(np.linalg.norm(vec))
        if abs(norm - 1.0) > NORM_TOLERANCE:
            raise ValueError(f"embedding must be unit-norm, got ||v||={norm:.6g}")
        self.dim = self.dim or vec.shape[0]
        self._counter += 1
        chunk = StoredChunk(
            id=f"chunk{self._counter}",
            source_id=source_id,
            chunk_index=int(chunk_index),
            text=text,
            embedding=vec,
        )
        self.chunks[chunk.id] = chunk
        self._keys[key] = chunk.id
        return chunk.id

    def top_k(self, query_embedding, k: int) -> list[tuple[StoredChunk, float]]:
        """Highest-cosine chunks, stable on ties by insertion order."""
        if k < 1:
            raise ValueError("k must be >= 1")
        if not self.chunks:
            return []
        query = np.asarray(query_embedding, dtype=np.float64)
        if self.dim is not None and query.shape != (self.dim,):
            raise ValueError(f"query dimension {query.shape} != store dimension {self.dim}")
        ids = list(self.chunks)
        matrix = np.stack([self.chunks[i].embedding for i in ids])
        scores = matrix @ query
        order = np.argsort(-scores, kind="stable")[:k]
        return [(self.chunks[ids[i]], float(scores[i])) for i in order]

    def save(self, path: str):
        with open(path, "w", encoding="utf-8") as handle:
            header = {
                "type": "header",
                "format": SNAPSHOT_FORMAT,
                "version": SNAPSHOT_VERSION,
                "dim": self.dim,
                "counter": self._counter,
            }
            handle.write(json.dumps(header) + "\n")
            for chunk in self.chunks.values():
                handle.write(
                    json.dumps(
                        {
                            "type": "chunk",
                            "id": chunk.id,
                            "source_id": chunk.source_id,
                            "chunk_index": chunk.chunk_index,
                            "text": chunk.text,
                            "embedding": chunk.embedding.tolist(),
                        },
                        ensure_ascii=False,
                    )
                    + "\n"
                )
            handle.write(json.dumps({"type": "trailer", "counts": {"chunks": len(self.chunks)}}) + "\n")

    @classmethod
    def load(cls, path: str) -> "ChunkStore":
        store = cls()
        saw_header = False
        saw_trailer = False
        trailer_counts: dict | None = None
        lineno = 0
        with open(path, encoding="utf-8") as handle:
            for lineno, line in enumerate(handle, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ParseError(f"invalid JSON record: {exc.msg}", line=lineno) from exc
                kind = record.get("type")
                try:
                    if kind == "header":
                        if record.get("format") != SNAPSHOT_FORMAT:
                            raise ParseError(
                                f"unexpected snapshot format {record.get('format')!r}", line=lineno
                            )
                        store.dim = record.get("dim")
                        store._counter = int(record.get("counter", 0))
                        saw_header = True
                    elif kind == "chunk":
                        chunk = StoredChunk(
                            id=record["id"],
                            source_id=record["source_id"],
                            chunk_index=int(record["chunk_index"]),
                            text=record["text"],
                            embedding=np.asarray(record["embedding"], dtype=np.float64),
                        )
                        store.chunks[chunk.id] = chunk
                        store._keys[(chunk.source_id, chunk.chunk_index)] = chunk.id
                    elif kind == "trailer":
                        saw_trailer = True
                        trailer_counts = record.get("counts")
                    else:
                        raise ParseError(f"unknown record type {kind!r}", line=lineno)
                except ParseError:
                    raise
                except (KeyError, TypeError, ValueError) as exc:
                    raise ParseError(f"malformed {kind!r} record: {exc}", line=lineno) from exc
        if not saw_header:
            raise ParseError("missing snapshot header", line=max(lineno, 1))
        if not saw_trailer:
            raise ParseError("missing snapshot trailer (truncated file?)", line=max(lineno, 1))
        if trailer_counts is not None and trailer_counts != {"chunks": len(store.chunks)}:
            raise ParseError(
                f"trailer counts {trailer_counts} do not match records", line=lineno
            )
        return store
