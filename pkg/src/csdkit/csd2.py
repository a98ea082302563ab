"""CSD of the second kind: significance of sentence locations.

Each sentence is scored against the whole article; only the top
t = max(1, floor(0.3 n)) scores survive at their positions x = i/n, all
other positions are zero.  Aggregation maps articles of different lengths
onto the common x = j/100 grid by nearest position.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .emd import WeightedPointCloud, cost_matrix, mover_score, solve_emd_exact
from .textmodel import Article, EmbeddingMatrix

__all__ = [
    "Csd2Curve",
    "Csd2Grid",
    "top_count",
    "sentence_scores",
    "csd2_curve",
    "aggregate_csd2",
]

AGGREGATE_GRID = np.arange(1, 101) / 100.0


def top_count(n: int) -> int:
    """Number of retained sentences: max(1, floor(0.3 n))."""
    return max(1, math.floor(0.3 * n))


@dataclass(frozen=True)
class Csd2Curve:
    """Per-position significance with exactly t nonzero entries."""

    values: np.ndarray = field(repr=False)
    t: int = 0

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 1 or vals.size < 1:
            raise ValueError(f"values must be a non-empty 1d array, got {vals.shape}")
        nonzero = int(np.count_nonzero(vals))
        if nonzero != self.t:
            raise ValueError(f"expected {self.t} nonzero entries, found {nonzero}")
        if self.t != top_count(vals.size):
            raise ValueError(f"t must be {top_count(vals.size)} for n={vals.size}, got {self.t}")
        if np.any(vals < 0.0) or np.any(vals > 1.0):
            raise ValueError("values must lie in [0, 1]")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def xs(self) -> np.ndarray:
        return np.arange(1, self.n + 1) / self.n


@dataclass(frozen=True)
class Csd2Grid:
    """Aggregate of Csd2Curves on the common 100-point grid."""

    values: np.ndarray = field(repr=False)
    stat: str = "mean"
    members: int = 1

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.shape != (100,):
            raise ValueError(f"grid must have 100 values, got {vals.shape}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def xs(self) -> np.ndarray:
        return AGGREGATE_GRID.copy()


def sentence_scores(article: Article, emb: EmbeddingMatrix) -> np.ndarray:
    """mover_score of each single sentence against the whole article."""
    if emb.n != article.n:
        raise ValueError(f"embeddings have {emb.n} rows for {article.n} sentences")
    whole = WeightedPointCloud.uniform(emb.rows)
    c_full = cost_matrix(whole, whole)
    wn = whole.weights
    out = np.empty(article.n)
    for i in range(article.n):
        cost = solve_emd_exact(np.array([1.0]), wn, c_full[i : i + 1]).cost
        out[i] = min(1.0, max(0.0, 1.0 - cost))
    return out


def csd2_curve(article: Article, emb: EmbeddingMatrix) -> Csd2Curve:
    """Keep the top t sentence scores at their positions, zero the rest.

    Ties at the cut retain the lower sentence index, so the retained set is
    the lexicographically smallest among score-maximal sets.
    """
    scores = sentence_scores(article, emb)
    n = article.n
    t = top_count(n)
    order = sorted(range(n), key=lambda i: (-scores[i], i))
    values = np.zeros(n)
    for i in order[:t]:
        # a kept sentence with score 0 would break the nonzero-count
        # invariant; nudge to the smallest positive float
        values[i] = scores[i] if scores[i] > 0.0 else 5e-324
    return Csd2Curve(values=values, t=t)


def aggregate_csd2(curves: list[Csd2Curve], stat: str = "mean") -> Csd2Grid:
    """Pointwise mean or median on the x = j/100 grid.

    Grid point j takes the value (zeros included) of the sentence whose
    position i/n is nearest to j/100, ties toward the smaller index.
    """
    if not curves:
        raise ValueError("cannot aggregate an empty curve list")
    if stat not in ("mean", "median"):
        raise ValueError(f"stat must be mean or median, got {stat!r}")
    rows = []
    for curve in curves:
        n = curve.n
        # nearest 1-based index to j*n/100, half-way ties to the smaller
        idx = np.clip(np.ceil(AGGREGATE_GRID * n - 0.5), 1, n).astype(int)
        rows.append(curve.values[idx - 1])
    stacked = np.sort(np.stack(rows), axis=0)  # order-invariant reduction
    vals = stacked.mean(axis=0) if stat == "mean" else np.median(stacked, axis=0)
    return Csd2Grid(values=vals, stat=stat, members=len(curves))
