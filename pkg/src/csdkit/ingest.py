"""Corpus and embedding I/O, the embedding-provider client, and result files.

Formats (all versioned):

* Corpus: UTF-8 JSON Lines, one object per article, either
  {"id": ..., "sentences": [...]} or {"id": ..., "text": ...}; raw text is
  split by the fallback sentence splitter.  Extra fields (e.g. essay rater
  scores) are preserved in CorpusFile.extras.
* Embeddings, text: JSON Lines {"id", "model", "dim", "vectors"}.
* Embeddings, binary: per-article records of magic "CSDE", version uint32,
  dim uint32, count uint32 (all little-endian), a length-prefixed UTF-8
  article id and model name, then count*dim float32 payload.  Bit-exact
  round trips.
* Provider protocol: POST {base}/embed with {"texts": [...]} returning
  {"model": ..., "dim": ..., "embeddings": [[...]]}; 400 on empty texts.

Loaders reject inconsistent data instead of repairing it; the one
exception is unit-norm snapping of embedding rows within 1e-3 of unit.
"""

from __future__ import annotations

import json
import os
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import requests

from .textmodel import Article, EmbeddingMatrix

__all__ = [
    "CorpusFile",
    "EmbeddingStore",
    "CorpusFormatError",
    "EmbeddingFormatError",
    "ProviderError",
    "ProviderTransportError",
    "ProviderStatusError",
    "ProviderResponseError",
    "split_sentences",
    "load_corpus",
    "save_corpus",
    "load_embeddings",
    "save_embeddings",
    "fetch_embeddings",
    "EmbeddingFetcher",
    "write_curve",
    "read_curve",
    "write_csd2",
    "read_csd2",
    "write_metrics",
    "PROVIDER_URL_ENV",
]

PROVIDER_URL_ENV = "CSD_PROVIDER_URL"

BINARY_MAGIC = b"CSDE"
BINARY_VERSION = 1
UNIT_NORM_SNAP = 1e-3


class CorpusFormatError(ValueError):
    pass


class EmbeddingFormatError(ValueError):
    pass


class ProviderError(RuntimeError):
    pass


class ProviderTransportError(ProviderError):
    pass


class ProviderStatusError(ProviderError):
    pass


class ProviderResponseError(ProviderError):
    pass


@dataclass(frozen=True)
class CorpusFile:
    path: str
    articles: tuple[Article, ...]
    extras: dict = field(default_factory=dict)  # article id -> unconsumed fields

    def __post_init__(self):
        if isinstance(self.articles, list):
            object.__setattr__(self, "articles", tuple(self.articles))

    def by_id(self, article_id: str) -> Article:
        for a in self.articles:
            if a.id == article_id:
                return a
        raise KeyError(f"no article {article_id!r} in {self.path}")


@dataclass
class EmbeddingStore:
    """Per-article embeddings sharing one model and dimension."""

    model: str
    dim: int
    matrices: dict[str, EmbeddingMatrix] = field(default_factory=dict)

    def add(self, matrix: EmbeddingMatrix) -> None:
        if matrix.dim != self.dim:
            raise EmbeddingFormatError(
                f"article {matrix.article_id!r} has dim {matrix.dim}, store has {self.dim}"
            )
        self.matrices[matrix.article_id] = matrix

    def get(self, article_id: str) -> EmbeddingMatrix:
        try:
            return self.matrices[article_id]
        except KeyError:
            raise KeyError(f"no embeddings for article {article_id!r}") from None


_SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+")


def split_sentences(text: str) -> list[str]:
    """Naive fallback splitter: break after ./!/? followed by whitespace,
    trimming empties.  Serious splitting belongs to the embedding provider."""
    return [part.strip() for part in _SENTENCE_SPLIT.split(text) if part.strip()]


# ---------------------------------------------------------------------------
# Corpus
# ---------------------------------------------------------------------------


def load_corpus(path) -> CorpusFile:
    path = str(path)
    articles: list[Article] = []
    extras: dict[str, dict] = {}
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"{path}:{lineno}: invalid JSON ({exc})") from None
            if not isinstance(obj, dict) or "id" not in obj:
                raise CorpusFormatError(f"{path}:{lineno}: expected an object with an 'id'")
            aid = str(obj["id"])
            if aid in seen:
                raise CorpusFormatError(f"{path}:{lineno}: duplicate article id {aid!r}")
            seen.add(aid)
            if "sentences" in obj:
                sentences = [str(s).strip() for s in obj["sentences"]]
            elif "text" in obj:
                sentences = split_sentences(str(obj["text"]))
            else:
                raise CorpusFormatError(
                    f"{path}:{lineno}: article {aid!r} has neither 'sentences' nor 'text'"
                )
            sentences = [s for s in sentences if s]
            if not sentences:
                raise CorpusFormatError(f"{path}:{lineno}: article {aid!r} has no sentences")
            try:
                articles.append(Article(id=aid, sentences=tuple(sentences)))
            except ValueError as exc:
                raise CorpusFormatError(f"{path}:{lineno}: {exc}") from None
            leftover = {k: v for k, v in obj.items() if k not in ("id", "sentences", "text")}
            if leftover:
                extras[aid] = leftover
    if not articles:
        raise CorpusFormatError(f"{path}: empty corpus")
    return CorpusFile(path=path, articles=tuple(articles), extras=extras)


def save_corpus(corpus: CorpusFile, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for art in corpus.articles:
            obj: dict = {"id": art.id, "sentences": list(art.sentences)}
            obj.update(corpus.extras.get(art.id, {}))
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# Embeddings
# ---------------------------------------------------------------------------


def _check_rows(aid: str, rows: np.ndarray) -> np.ndarray:
    """Renormalize rows within 1e-3 of unit L2 norm; reject anything else."""
    norms = np.linalg.norm(rows, axis=1)
    bad = np.abs(norms - 1.0) > UNIT_NORM_SNAP
    if bad.any():
        row = int(np.argmax(bad)) + 1
        raise EmbeddingFormatError(
            f"article {aid!r}: row {row} has norm {norms[row - 1]:.6g}, "
            f"further than {UNIT_NORM_SNAP} from unit"
        )
    return rows


def load_embeddings(path) -> EmbeddingStore:
    path = str(path)
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == BINARY_MAGIC:
        return _load_embeddings_binary(path)
    return _load_embeddings_jsonl(path)


def _load_embeddings_jsonl(path: str) -> EmbeddingStore:
    store: EmbeddingStore | None = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise EmbeddingFormatError(f"{path}:{lineno}: invalid JSON ({exc})") from None
            try:
                aid = str(obj["id"])
                model = str(obj["model"])
                dim = int(obj["dim"])
                vectors = np.array(obj["vectors"], dtype=np.float64)
            except (KeyError, TypeError, ValueError) as exc:
                raise EmbeddingFormatError(f"{path}:{lineno}: {exc}") from None
            if vectors.ndim != 2 or vectors.shape[1] != dim:
                raise EmbeddingFormatError(
                    f"{path}:{lineno}: vectors shape {vectors.shape} does not match dim {dim}"
                )
            if store is None:
                store = EmbeddingStore(model=model, dim=dim)
            elif store.model != model or store.dim != dim:
                raise EmbeddingFormatError(
                    f"{path}:{lineno}: mixed model/dim ({model!r}/{dim} vs "
                    f"{store.model!r}/{store.dim})"
                )
            store.add(EmbeddingMatrix(aid, _check_rows(aid, vectors)))
    if store is None:
        raise EmbeddingFormatError(f"{path}: empty embedding file")
    return store


def _load_embeddings_binary(path: str) -> EmbeddingStore:
    store: EmbeddingStore | None = None
    data = Path(path).read_bytes()
    off = 0
    while off < len(data):
        if data[off : off + 4] != BINARY_MAGIC:
            raise EmbeddingFormatError(f"{path}: bad magic at byte {off}")
        try:
            version, dim, count = struct.unpack_from("<III", data, off + 4)
            off += 16
            (id_len,) = struct.unpack_from("<I", data, off)
            off += 4
            aid = data[off : off + id_len].decode("utf-8")
            off += id_len
            (model_len,) = struct.unpack_from("<I", data, off)
            off += 4
            model = data[off : off + model_len].decode("utf-8")
            off += model_len
            payload = count * dim * 4
            vectors = np.frombuffer(data, dtype="<f4", count=count * dim, offset=off)
            off += payload
        except (struct.error, UnicodeDecodeError, ValueError) as exc:
            raise EmbeddingFormatError(f"{path}: truncated or corrupt record ({exc})") from None
        if version != BINARY_VERSION:
            raise EmbeddingFormatError(f"{path}: unsupported format version {version}")
        rows = vectors.astype(np.float64).reshape(count, dim)
        if store is None:
            store = EmbeddingStore(model=model, dim=dim)
        elif store.model != model or store.dim != dim:
            raise EmbeddingFormatError(f"{path}: mixed model/dim across records")
        store.add(EmbeddingMatrix(aid, _check_rows(aid, rows)))
    if store is None:
        raise EmbeddingFormatError(f"{path}: empty embedding file")
    return store


def save_embeddings(store: EmbeddingStore, path, format: str = "binary") -> None:
    """Write a store; binary round-trips bit-exactly (float32 payload)."""
    path = str(path)
    if format == "binary":
        with open(path, "wb") as fh:
            for aid in store.matrices:
                mat = store.matrices[aid]
                rows32 = mat.rows.astype("<f4")
                id_b = aid.encode("utf-8")
                model_b = store.model.encode("utf-8")
                fh.write(BINARY_MAGIC)
                fh.write(struct.pack("<III", BINARY_VERSION, mat.dim, mat.n))
                fh.write(struct.pack("<I", len(id_b)) + id_b)
                fh.write(struct.pack("<I", len(model_b)) + model_b)
                fh.write(rows32.tobytes())
    elif format == "jsonl":
        with open(path, "w", encoding="utf-8") as fh:
            for aid in store.matrices:
                mat = store.matrices[aid]
                obj = {
                    "id": aid,
                    "model": store.model,
                    "dim": mat.dim,
                    "vectors": [[float(v) for v in row] for row in mat.rows],
                }
                fh.write(json.dumps(obj) + "\n")
    else:
        raise ValueError(f"unknown embedding format {format!r}")


# ---------------------------------------------------------------------------
# Provider client
# ---------------------------------------------------------------------------


def fetch_embeddings(
    provider_url: str,
    article: Article,
    retries: int = 2,
    timeout: float = 60.0,
    session: requests.Session | None = None,
) -> EmbeddingMatrix:
    """One POST per article; validates vector count and dimension."""
    url = provider_url.rstrip("/") + "/embed"
    body = {"texts": list(article.sentences)}
    sess = session or requests
    last: Exception | None = None
    for _ in range(retries + 1):
        try:
            resp = sess.post(url, json=body, timeout=timeout)
        except requests.RequestException as exc:
            last = ProviderTransportError(f"POST {url} failed: {exc}")
            continue
        if resp.status_code != 200:
            last = ProviderStatusError(f"POST {url} returned {resp.status_code}")
            continue
        try:
            obj = resp.json()
            vectors = np.array(obj["embeddings"], dtype=np.float64)
        except (ValueError, KeyError, TypeError) as exc:
            raise ProviderResponseError(f"malformed provider response: {exc}") from None
        if vectors.ndim != 2 or vectors.shape[0] != article.n:
            raise ProviderResponseError(
                f"provider returned {vectors.shape[0] if vectors.ndim == 2 else '?'} vectors "
                f"for {article.n} sentences of {article.id!r}"
            )
        if "dim" in obj and int(obj["dim"]) != vectors.shape[1]:
            raise ProviderResponseError(
                f"declared dim {obj['dim']} does not match vectors of dim {vectors.shape[1]}"
            )
        return EmbeddingMatrix(article.id, vectors)
    raise last if last is not None else ProviderTransportError(f"POST {url} failed")


class EmbeddingFetcher:
    """Provider client with a write-through store cache.

    A warm cache answers without any network traffic; fetched matrices are
    appended to the store file after every batch.
    """

    def __init__(
        self,
        provider_url: str | None = None,
        cache_path: str | None = None,
        retries: int = 2,
        timeout: float = 60.0,
        format: str = "binary",
    ):
        self.provider_url = provider_url or os.environ.get(PROVIDER_URL_ENV, "")
        self.cache_path = cache_path
        self.retries = retries
        self.timeout = timeout
        self.format = format
        self.store: EmbeddingStore | None = None
        if cache_path and Path(cache_path).exists():
            self.store = load_embeddings(cache_path)

    def fetch(self, article: Article) -> EmbeddingMatrix:
        if self.store is not None and article.id in self.store.matrices:
            return self.store.get(article.id)
        if not self.provider_url:
            raise ProviderTransportError(
                f"no provider url configured (flag or ${PROVIDER_URL_ENV}) and "
                f"article {article.id!r} is not cached"
            )
        mat = fetch_embeddings(
            self.provider_url, article, retries=self.retries, timeout=self.timeout
        )
        if self.store is None:
            self.store = EmbeddingStore(model="provider", dim=mat.dim)
        self.store.add(mat)
        if self.cache_path:
            save_embeddings(self.store, self.cache_path, format=self.format)
        return mat

    def fetch_corpus(self, corpus: CorpusFile) -> EmbeddingStore:
        for art in corpus.articles:
            self.fetch(art)
        assert self.store is not None
        return self.store


# ---------------------------------------------------------------------------
# Result files
# ---------------------------------------------------------------------------


CURVE_FORMAT_VERSION = 1


def _curve_metadata(curve) -> dict:
    meta = {
        "format_version": CURVE_FORMAT_VERSION,
        "mode": curve.mode,
        "k": curve.k,
        "n": curve.n,
        "sample_count": curve.sample_count,
        "seed": curve.seed,
    }
    if curve.members is not None:
        meta["members"] = curve.members
    if curve.stat is not None:
        meta["stat"] = curve.stat
    return meta


def write_curve(curve, path, format: str = "csv") -> None:
    """CSV is two 17-significant-digit columns "x,y"; JSON carries the full
    metadata (mode, k, n, seed, sample_count, aggregation info)."""
    path = str(path)
    if format == "csv":
        lines = ["x,y"]
        lines.extend(f"{x:.17g},{y:.17g}" for x, y in zip(curve.xs, curve.ys))
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    elif format == "json":
        doc = _curve_metadata(curve)
        doc["xs"] = [float(v) for v in curve.xs]
        doc["ys"] = [float(v) for v in curve.ys]
        Path(path).write_text(
            json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8"
        )
    else:
        raise ValueError(f"unknown curve format {format!r}")


def read_curve(path):
    """Load a JSON curve written by write_curve."""
    from .csd1 import CsdCurve

    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    version = doc.get("format_version", CURVE_FORMAT_VERSION)
    if version != CURVE_FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported curve format version {version}")
    return CsdCurve(
        xs=np.array(doc["xs"], dtype=np.float64),
        ys=np.array(doc["ys"], dtype=np.float64),
        k=int(doc["k"]),
        n=int(doc["n"]),
        mode=doc["mode"],
        sample_count=int(doc["sample_count"]),
        seed=doc.get("seed"),
        members=doc.get("members"),
        stat=doc.get("stat"),
    )


def write_csd2(curve, path, format: str = "csv") -> None:
    """Per-position curve; CSV columns are "x,y" over positions i/n."""
    path = str(path)
    if format == "csv":
        lines = ["x,y"]
        lines.extend(f"{x:.17g},{y:.17g}" for x, y in zip(curve.xs, curve.values))
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    elif format == "json":
        doc = {
            "format_version": CURVE_FORMAT_VERSION,
            "kind": "csd2",
            "n": curve.n,
            "t": curve.t,
        }
        doc["values"] = [float(v) for v in curve.values]
        Path(path).write_text(
            json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8"
        )
    else:
        raise ValueError(f"unknown csd2 format {format!r}")


def read_csd2(path):
    from .csd2 import Csd2Curve

    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("kind") != "csd2":
        raise ValueError(f"{path}: not a csd2 curve file")
    return Csd2Curve(values=np.array(doc["values"], dtype=np.float64), t=int(doc["t"]))


def write_metrics(metrics: dict, path) -> None:
    Path(path).write_text(
        json.dumps(metrics, indent=1, sort_keys=True) + "\n", encoding="utf-8"
    )
