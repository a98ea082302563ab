"""Articles, sub-text blocks, and the combinatorics of k-subsets of sentences.

Sentence indices are 1-based everywhere, including serialized forms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

__all__ = [
    "Article",
    "BlockIndex",
    "EmbeddingMatrix",
    "binomial",
    "enumerate_blocks",
    "block_text",
]


@dataclass(frozen=True)
class Article:
    """An ordered sentence sequence with an identifier.

    Sentence order is significant and immutable after construction.
    """

    id: str
    sentences: tuple[str, ...]

    def __post_init__(self):
        if isinstance(self.sentences, list):
            object.__setattr__(self, "sentences", tuple(self.sentences))
        if len(self.sentences) < 1:
            raise ValueError(f"article {self.id!r} has no sentences")
        for i, s in enumerate(self.sentences, start=1):
            if not s or not s.strip():
                raise ValueError(f"article {self.id!r}: sentence {i} is empty")

    @property
    def n(self) -> int:
        return len(self.sentences)


@dataclass(frozen=True, order=True)
class BlockIndex:
    """A sub-text block identified by strictly increasing 1-based sentence indices."""

    indices: tuple[int, ...]

    def __post_init__(self):
        if isinstance(self.indices, list):
            object.__setattr__(self, "indices", tuple(self.indices))
        idx = self.indices
        if len(idx) < 1:
            raise ValueError("block must contain at least one index")
        if idx[0] < 1:
            raise ValueError(f"block indices are 1-based, got {idx[0]}")
        for a, b in zip(idx, idx[1:]):
            if b <= a:
                raise ValueError(f"block indices must be strictly increasing, got {idx}")

    @property
    def k(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class EmbeddingMatrix:
    """One unit-normalized embedding row per sentence of a single article.

    Rows are renormalized to unit L2 norm at construction (loader-level
    rejection of badly scaled rows lives in ingest).
    """

    article_id: str
    rows: np.ndarray = field(repr=False)

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[0] < 1 or rows.shape[1] < 1:
            raise ValueError(
                f"embeddings for {self.article_id!r} must be a non-empty 2d array, "
                f"got shape {rows.shape}"
            )
        norms = np.linalg.norm(rows, axis=1)
        if np.any(norms == 0.0):
            bad = int(np.argmax(norms == 0.0)) + 1
            raise ValueError(f"embeddings for {self.article_id!r}: row {bad} has zero norm")
        rows = rows / norms[:, None]
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.rows.shape[1]


def binomial(n: int, k: int) -> int:
    """Exact C(n, k) as an arbitrary-precision integer.

    Raises ValueError when k < 0 or k > n (unlike math.comb, which returns 0
    for k > n).
    """
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    if k < 0 or k > n:
        raise ValueError(f"k must be in 0..{n}, got {k}")
    return math.comb(n, k)


def enumerate_blocks(n: int, k: int) -> Iterator[BlockIndex]:
    """Yield all C(n, k) size-k blocks in lexicographic order.

    First block is (1, .., k), last is (n-k+1, .., n).
    """
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    if k < 1 or k > n:
        raise ValueError(f"k must be in 1..{n}, got {k}")
    # itertools.combinations is lexicographic over an increasing input range
    import itertools

    for combo in itertools.combinations(range(1, n + 1), k):
        yield BlockIndex(combo)


def block_text(article: Article, block: BlockIndex) -> list[str]:
    """Sentences of `block`, in original article order."""
    if block.indices[-1] > article.n:
        raise ValueError(
            f"block index {block.indices[-1]} out of range for article "
            f"{article.id!r} with {article.n} sentences"
        )
    return [article.sentences[i - 1] for i in block.indices]
