"""Shared synthetic fixtures.

All tests run offline on synthetic unit-vector embeddings; the only
network traffic is against the in-process stub provider below.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest

from csdkit.textmodel import Article, EmbeddingMatrix


def unit_rows(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    rows = rng.normal(size=(n, dim))
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)


def clustered_rows(
    rng: np.random.Generator,
    n: int,
    dim: int,
    n_centers: int = 2,
    spread: float = 0.3,
    centers: np.ndarray | None = None,
) -> np.ndarray:
    """Unit vectors scattered around a few random directions; sentences
    cycle through the centers so every topic recurs through the article."""
    if centers is None:
        centers = unit_rows(rng, n_centers, dim)
    rows = []
    for i in range(n):
        v = centers[i % len(centers)] + spread * rng.normal(size=dim)
        rows.append(v / np.linalg.norm(v))
    return np.array(rows)


def make_article(article_id: str, n: int) -> Article:
    return Article(
        id=article_id,
        sentences=tuple(f"Sentence {i} of {article_id}." for i in range(1, n + 1)),
    )


def synthetic_pair(
    article_id: str,
    n: int,
    seed: int,
    dim: int = 24,
    n_centers: int = 2,
    spread: float = 0.3,
) -> tuple[Article, EmbeddingMatrix]:
    rng = np.random.default_rng(seed)
    art = make_article(article_id, n)
    emb = EmbeddingMatrix(article_id, clustered_rows(rng, n, dim, n_centers, spread))
    return art, emb


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture
def small_pair() -> tuple[Article, EmbeddingMatrix]:
    return synthetic_pair("small", 10, seed=7, n_centers=3)


class StubProvider(BaseHTTPRequestHandler):
    """Deterministic embedding provider; counts requests for cache tests."""

    requests_seen = 0
    mode = "ok"
    dim = 6

    def do_POST(self):
        type(self).requests_seen += 1
        length = int(self.headers.get("Content-Length", 0))
        body = json.loads(self.rfile.read(length))
        texts = body.get("texts", [])
        if self.path != "/embed" or not texts:
            self.send_response(400)
            self.end_headers()
            return
        if type(self).mode == "error500":
            self.send_response(500)
            self.end_headers()
            return
        if type(self).mode == "garbage":
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.end_headers()
            self.wfile.write(b"not json at all")
            return
        vectors = []
        for text in texts:
            text_rng = np.random.default_rng(abs(hash(text)) % (2**32))
            v = text_rng.normal(size=type(self).dim)
            vectors.append((v / np.linalg.norm(v)).tolist())
        if type(self).mode == "short":
            vectors = vectors[:-1]
        doc = {"model": "stub", "dim": type(self).dim, "embeddings": vectors}
        payload = json.dumps(doc).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


@pytest.fixture
def stub_provider():
    server = HTTPServer(("127.0.0.1", 0), StubProvider)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    StubProvider.requests_seen = 0
    StubProvider.mode = "ok"
    yield f"http://127.0.0.1:{server.server_port}"
    server.shutdown()
