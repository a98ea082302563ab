"""Encoder backends.

Two kinds are registered:

* ``st:<checkpoint>`` (or a bare checkpoint name) wraps a SentenceTransformer
  model; inference runs in deterministic eval mode and the import is lazy so
  the package works without torch installed.
* ``hash:<dim>`` is a fully offline deterministic encoder that derives each
  vector from a SHA-256 of the text.  It carries no semantics and exists for
  air-gapped environments, protocol tests, and CI.

Every backend emits unit L2-normalized float32 vectors, post-processed so
that renormalizing in float64 and casting back to float32 is a bitwise
no-op (consumers of the file formats renormalize on load; the fixed point
makes round trips byte-exact).
"""

from __future__ import annotations

import hashlib
import os

import numpy as np

__all__ = ["ModelError", "Encoder", "HashEncoder", "SentenceTransformerEncoder", "load_encoder", "MODEL_ENV"]

MODEL_ENV = "CSD_EMBED_MODEL"
DEFAULT_MODEL = "all-MiniLM-L6-v2"


class ModelError(RuntimeError):
    pass


def _fixed_point_f32(rows: np.ndarray) -> np.ndarray:
    """Unit-normalize and settle on the float32 fixed point of
    normalize-then-cast, so loaders that renormalize reproduce the exact
    same float32 bits."""
    v64 = rows.astype(np.float64)
    norms = np.linalg.norm(v64, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ModelError("encoder produced a zero vector")
    v32 = (v64 / norms).astype("<f4")
    for _ in range(8):
        w64 = v32.astype(np.float64)
        w32 = (w64 / np.linalg.norm(w64, axis=1, keepdims=True)).astype("<f4")
        if np.array_equal(w32, v32):
            return v32
        v32 = w32
    return v32


class Encoder:
    """Interface: name, dim, and encode(texts) -> (n, dim) float32."""

    name: str
    dim: int

    def encode(self, texts: list[str], batch_size: int = 32) -> np.ndarray:
        raise NotImplementedError


class HashEncoder(Encoder):
    """Deterministic offline encoder: text -> seeded gaussian unit vector.

    Identical texts always produce identical vectors; distinct texts are
    near-orthogonal in high dimensions.
    """

    def __init__(self, dim: int = 64):
        if dim < 2:
            raise ModelError(f"hash encoder dim must be >= 2, got {dim}")
        self.dim = dim
        self.name = f"hash:{dim}"

    def encode(self, texts: list[str], batch_size: int = 32) -> np.ndarray:
        rows = np.empty((len(texts), self.dim), dtype=np.float64)
        for i, text in enumerate(texts):
            digest = hashlib.sha256(text.encode("utf-8")).digest()
            seed = int.from_bytes(digest[:8], "little")
            rng = np.random.default_rng(seed)
            rows[i] = rng.normal(size=self.dim)
        return _fixed_point_f32(rows)


class SentenceTransformerEncoder(Encoder):
    """SentenceTransformer wrapper; batched, deterministic inference."""

    def __init__(self, checkpoint: str):
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:
            raise ModelError(
                "sentence-transformers is not installed; install the [st] extra "
                "or use a hash:<dim> model"
            ) from exc
        try:
            self._model = SentenceTransformer(checkpoint)
        except Exception as exc:
            raise ModelError(f"cannot load checkpoint {checkpoint!r}: {exc}") from exc
        self.name = checkpoint
        self.dim = int(self._model.get_sentence_embedding_dimension())

    def encode(self, texts: list[str], batch_size: int = 32) -> np.ndarray:
        vectors = self._model.encode(
            texts,
            batch_size=batch_size,
            convert_to_numpy=True,
            normalize_embeddings=True,
            show_progress_bar=False,
        )
        return _fixed_point_f32(np.asarray(vectors))


def load_encoder(spec: str | None = None) -> Encoder:
    """Resolve a model spec: explicit argument, then $CSD_EMBED_MODEL, then
    the default SentenceTransformer checkpoint."""
    spec = spec or os.environ.get(MODEL_ENV) or DEFAULT_MODEL
    if spec.startswith("hash:"):
        return HashEncoder(int(spec.split(":", 1)[1]))
    if spec.startswith("st:"):
        spec = spec.split(":", 1)[1]
    return SentenceTransformerEncoder(spec)
