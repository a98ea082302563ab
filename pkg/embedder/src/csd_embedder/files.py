"""Corpus reading and embedding-file writing.

The on-disk formats are the shared contract with the CSD analysis package:

* Corpus: JSON Lines, one article per line, {"id", "sentences": [...]} or
  {"id", "text": ...} (raw text split after ./!/? + whitespace).
* Embeddings JSONL: {"id", "model", "dim", "vectors"} per article.
* Embeddings binary: per-article records of magic "CSDE", version=1 uint32,
  dim uint32, count uint32 (little-endian), length-prefixed UTF-8 id and
  model strings, then count*dim float32 little-endian payload.
"""

from __future__ import annotations

import json
import re
import struct

import numpy as np

from .models import Encoder

__all__ = ["CorpusError", "read_corpus", "write_embeddings", "embed_file"]

BINARY_MAGIC = b"CSDE"
BINARY_VERSION = 1

_SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+")


class CorpusError(ValueError):
    pass


def read_corpus(path) -> list[tuple[str, list[str]]]:
    out: list[tuple[str, list[str]]] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: invalid JSON ({exc})") from None
            if "id" not in obj:
                raise CorpusError(f"{path}:{lineno}: missing 'id'")
            aid = str(obj["id"])
            if aid in seen:
                raise CorpusError(f"{path}:{lineno}: duplicate id {aid!r}")
            seen.add(aid)
            if "sentences" in obj:
                sentences = [str(s).strip() for s in obj["sentences"] if str(s).strip()]
            elif "text" in obj:
                sentences = [
                    p.strip() for p in _SENTENCE_SPLIT.split(str(obj["text"])) if p.strip()
                ]
            else:
                raise CorpusError(f"{path}:{lineno}: neither 'sentences' nor 'text'")
            if not sentences:
                raise CorpusError(f"{path}:{lineno}: article {aid!r} has no sentences")
            out.append((aid, sentences))
    if not out:
        raise CorpusError(f"{path}: empty corpus")
    return out


def write_embeddings(
    records: list[tuple[str, np.ndarray]], model: str, path, format: str = "binary"
) -> None:
    """records: (article_id, float32 (n, dim) unit rows) in corpus order."""
    if format == "binary":
        with open(path, "wb") as fh:
            for aid, rows in records:
                rows32 = np.ascontiguousarray(rows, dtype="<f4")
                count, dim = rows32.shape
                id_b = aid.encode("utf-8")
                model_b = model.encode("utf-8")
                fh.write(BINARY_MAGIC)
                fh.write(struct.pack("<III", BINARY_VERSION, dim, count))
                fh.write(struct.pack("<I", len(id_b)) + id_b)
                fh.write(struct.pack("<I", len(model_b)) + model_b)
                fh.write(rows32.tobytes())
    elif format == "jsonl":
        with open(path, "w", encoding="utf-8") as fh:
            for aid, rows in records:
                obj = {
                    "id": aid,
                    "model": model,
                    "dim": int(rows.shape[1]),
                    "vectors": [[float(v) for v in row] for row in rows],
                }
                fh.write(json.dumps(obj) + "\n")
    else:
        raise ValueError(f"unknown embedding format {format!r}")


def embed_file(
    corpus_path,
    out_path,
    encoder: Encoder,
    format: str = "binary",
    batch_size: int = 32,
) -> int:
    """Embed every article of a corpus into one embedding file; returns the
    article count.  Deterministic: identical input produces identical bytes."""
    corpus = read_corpus(corpus_path)
    records = []
    for aid, sentences in corpus:
        rows = encoder.encode(sentences, batch_size=batch_size)
        norms = np.linalg.norm(rows.astype(np.float64), axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise ValueError(f"encoder returned non-unit rows for article {aid!r}")
        records.append((aid, rows))
    write_embeddings(records, encoder.name, out_path, format=format)
    return len(records)
