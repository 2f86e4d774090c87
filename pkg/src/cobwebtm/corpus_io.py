"""Corpus file formats.

Embedding files are the bit-exact "CBW1" layout: 4 magic bytes, then
little-endian u32 dimensionality, u64 row count, then rows of float32
values. Documents travel as JSONL, one object per line; word-vector tables
reuse the CBW1 layout with a row-aligned sidecar vocabulary file.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

MAGIC = b"CBW1"
_HEADER = struct.Struct("<4sIQ")


@dataclass
class DocumentRecord:
    id: str
    tokens: list[str]
    embedding: Optional[np.ndarray] = None
    label: Optional[str] = None
    timestamp: Optional[str] = None
    arrival_index: int = 0


def write_embeddings(path: str, vectors: np.ndarray) -> None:
    vectors = np.asarray(vectors, dtype=np.float32)
    if vectors.ndim != 2:
        raise ValueError("expected a 2-D array of row vectors")
    rows, dim = vectors.shape
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, dim, rows))
            fh.write(np.ascontiguousarray(vectors).tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_embeddings(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise ValueError(f"{path}: truncated embedding header")
        magic, dim, rows = _HEADER.unpack(header)
        if magic != MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        payload = fh.read()
    expected = rows * dim * 4
    if len(payload) != expected:
        raise ValueError(
            f"{path}: payload is {len(payload)} bytes, expected {expected}"
        )
    return np.frombuffer(payload, dtype="<f4").reshape(rows, dim)


def read_documents(path: str) -> list[DocumentRecord]:
    docs: list[DocumentRecord] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno + 1}: invalid JSON: {exc}") from exc
            if "id" not in obj or "tokens" not in obj:
                raise ValueError(f"{path}:{lineno + 1}: missing id or tokens")
            doc_id = str(obj["id"])
            if doc_id in seen:
                raise ValueError(f"{path}:{lineno + 1}: duplicate id {doc_id!r}")
            seen.add(doc_id)
            docs.append(
                DocumentRecord(
                    id=doc_id,
                    tokens=[str(t) for t in obj["tokens"]],
                    label=obj.get("label"),
                    timestamp=obj.get("timestamp"),
                    arrival_index=len(docs),
                )
            )
    return docs


def write_documents(path: str, docs: Sequence[DocumentRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            obj: dict = {"id": doc.id, "tokens": doc.tokens}
            if doc.label is not None:
                obj["label"] = doc.label
            if doc.timestamp is not None:
                obj["timestamp"] = doc.timestamp
            fh.write(json.dumps(obj) + "\n")


def load_corpus(docs_path: str, embeddings_path: str) -> list[DocumentRecord]:
    """Join the document JSONL with its embedding file, row for row."""
    docs = read_documents(docs_path)
    vectors = read_embeddings(embeddings_path)
    if len(docs) != vectors.shape[0]:
        raise ValueError(
            f"{docs_path} has {len(docs)} documents but {embeddings_path} "
            f"has {vectors.shape[0]} rows"
        )
    for doc, row in zip(docs, vectors):
        doc.embedding = row.astype(np.float64)
    return docs


def read_word_vectors(vectors_path: str, vocab_path: str) -> dict[str, np.ndarray]:
    """Word-vector lookup table: CBW1 rows aligned with a one-word-per-line
    sidecar vocabulary file."""
    vectors = read_embeddings(vectors_path)
    with open(vocab_path, "r", encoding="utf-8") as fh:
        words = [line.rstrip("\n") for line in fh if line.rstrip("\n")]
    if len(words) != vectors.shape[0]:
        raise ValueError(
            f"{vocab_path} lists {len(words)} words but {vectors_path} "
            f"has {vectors.shape[0]} rows"
        )
    return {w: vectors[i].astype(np.float64) for i, w in enumerate(words)}
