"""CSD of the first kind: significance distribution of size-k sub-text blocks.

Every size-k subset of an article's sentences is scored by its mover score
against the whole article; the scores, sorted descending with ties broken
toward the lexicographically earlier block, form a discrete curve over
rank fractions x = j / N.

Exact enumeration blows up combinatorially, so the approximation samples
5,000 blocks uniformly at random plus 5,000 blocks stratified over
affinity-propagation clusters of the sentence embeddings, scores the
distinct union, and normalizes ranks by the distinct-sample count.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .affinity import ClusterAssignment, cluster_ap, similarity_matrix
from .emd import pairwise_cost, solve_emd_exact, solve_emd_sinkhorn
from .emd import EXACT_MAX_SOURCE, EXACT_MAX_TARGET
from .textmodel import Article, BlockIndex, EmbeddingMatrix, binomial, enumerate_blocks

__all__ = [
    "CsdCurve",
    "Segments",
    "EnumerationCapError",
    "DEFAULT_ENUMERATION_CAP",
    "block_size",
    "csd1_exact",
    "csd1_approx",
    "sample_uniform_blocks",
    "sample_stratified_blocks",
    "detect_segments",
    "aggregate_curves",
    "make_scrambled_article",
]

DEFAULT_ENUMERATION_CAP = 200_000
DEFAULT_UNIFORM_BLOCKS = 5000
DEFAULT_STRATIFIED_BLOCKS = 5000

AGGREGATE_GRID = np.arange(1, 101) / 100.0


class EnumerationCapError(ValueError):
    """C(n, k) exceeds the exact-enumeration budget; use csd1_approx."""


@dataclass(frozen=True)
class CsdCurve:
    """Sorted discrete significance distribution.

    xs[j] = (j+1)/sample_count is the rank fraction; ys is non-increasing.
    k and n are 0 for aggregated curves whose members disagree.
    """

    xs: np.ndarray = field(repr=False)
    ys: np.ndarray = field(repr=False)
    k: int = 0
    n: int = 0
    mode: str = "exact"
    sample_count: int = 0
    seed: int | None = None
    members: int | None = None
    stat: str | None = None

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=np.float64)
        ys = np.asarray(self.ys, dtype=np.float64)
        if xs.shape != ys.shape or xs.ndim != 1 or xs.size < 1:
            raise ValueError(f"xs/ys must be equal-length 1d arrays, got {xs.shape}/{ys.shape}")
        if self.sample_count != xs.size:
            raise ValueError(f"sample_count {self.sample_count} != {xs.size} points")
        if xs[0] <= 0.0 or xs[-1] > 1.0 + 1e-12 or np.any(np.diff(xs) <= 0.0):
            raise ValueError("xs must be strictly increasing within (0, 1]")
        if np.any(ys < -1e-12) or np.any(ys > 1.0 + 1e-12):
            raise ValueError("ys must lie in [0, 1]")
        if np.any(np.diff(ys) > 1e-12):
            raise ValueError("ys must be non-increasing")
        if self.mode not in ("exact", "approx"):
            raise ValueError(f"mode must be exact or approx, got {self.mode!r}")
        xs.setflags(write=False)
        ys.setflags(write=False)
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)


@dataclass(frozen=True)
class Segments:
    """L/M/R segmentation boundaries of a CSD-1 curve.

    degenerate: the curve was flat and the boundaries are placeholders.
    low_confidence: the knee geometry was weaker than 0.005 on a side.
    """

    l_end: float
    r_start: float
    degenerate: bool = False
    low_confidence: bool = False

    def __post_init__(self):
        if not (0.0 < self.l_end < self.r_start < 1.0):
            raise ValueError(
                f"need 0 < l_end < r_start < 1, got ({self.l_end}, {self.r_start})"
            )


def block_size(c: float, n: int) -> int:
    """Block size for a fraction c of n sentences: max(1, floor(c*n))."""
    if not (0.0 < c <= 1.0):
        raise ValueError(f"size fraction must be in (0, 1], got {c}")
    return max(1, math.floor(c * n))


# ---------------------------------------------------------------------------
# Block scoring
# ---------------------------------------------------------------------------


def _score_chunk(args) -> list[float]:
    cost_full, n, chunk, use_sinkhorn = args
    wn = np.full(n, 1.0 / n)
    out = []
    for indices in chunk:
        k = len(indices)
        wk = np.full(k, 1.0 / k)
        c = np.ascontiguousarray(cost_full[np.asarray(indices) - 1])
        if use_sinkhorn:
            cost = solve_emd_sinkhorn(wk, wn, c).cost
        else:
            cost = solve_emd_exact(wk, wn, c).cost
        out.append(min(1.0, max(0.0, 1.0 - cost)))
    return out


def score_blocks(
    emb: EmbeddingMatrix,
    blocks: list[tuple[int, ...]],
    jobs: int = 1,
) -> np.ndarray:
    """Mover score of each block against the whole article.

    The random draws producing `blocks` happen before this call, so the
    jobs setting never changes results; chunks are collected in input order.
    """
    n = emb.n
    cost_full = pairwise_cost(emb.rows)
    kmax = max((len(b) for b in blocks), default=1)
    use_sinkhorn = kmax > EXACT_MAX_SOURCE or n > EXACT_MAX_TARGET

    if jobs <= 1 or len(blocks) < 256:
        return np.array(_score_chunk((cost_full, n, blocks, use_sinkhorn)))

    chunk_size = max(64, -(-len(blocks) // (jobs * 4)))
    chunks = [blocks[i : i + chunk_size] for i in range(0, len(blocks), chunk_size)]
    args = [(cost_full, n, ch, use_sinkhorn) for ch in chunks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        parts = list(pool.map(_score_chunk, args))
    return np.array([s for part in parts for s in part])


def _sorted_curve_arrays(
    blocks: list[tuple[int, ...]], scores: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Descending by score; equal scores rank the lexicographically earlier
    block first."""
    order = sorted(range(len(blocks)), key=lambda t: (-scores[t], blocks[t]))
    m = len(blocks)
    xs = np.arange(1, m + 1) / m
    ys = scores[np.array(order)]
    return xs, ys


# ---------------------------------------------------------------------------
# Exact and approximated curves
# ---------------------------------------------------------------------------


def csd1_exact(
    article: Article,
    emb: EmbeddingMatrix,
    k: int,
    cap: int = DEFAULT_ENUMERATION_CAP,
    jobs: int = 1,
) -> CsdCurve:
    """Score all C(n, k) blocks."""
    n = article.n
    if emb.n != n:
        raise ValueError(f"embeddings have {emb.n} rows for {n} sentences")
    total = binomial(n, k)
    if total > cap:
        raise EnumerationCapError(
            f"C({n},{k}) = {total} exceeds the enumeration cap {cap}; use csd1_approx"
        )
    blocks = [b.indices for b in enumerate_blocks(n, k)]
    scores = score_blocks(emb, blocks, jobs=jobs)
    xs, ys = _sorted_curve_arrays(blocks, scores)
    return CsdCurve(xs=xs, ys=ys, k=k, n=n, mode="exact", sample_count=len(blocks))


def sample_uniform_blocks(
    n: int, k: int, count: int, rng: np.random.Generator
) -> list[BlockIndex]:
    """`count` independent uniformly random k-subsets (Floyd's sampling);
    duplicates across draws are permitted."""
    if k < 1 or k > n:
        raise ValueError(f"k must be in 1..{n}, got {k}")
    out = []
    for _ in range(count):
        chosen: set[int] = set()
        for j in range(n - k + 1, n + 1):
            t = int(rng.integers(1, j + 1))
            chosen.add(j if t in chosen else t)
        out.append(BlockIndex(tuple(sorted(chosen))))
    return out


def _stratified_quotas(sizes: tuple[int, ...], k: int, n: int) -> list[int]:
    """Per-cluster quotas floor(k*n_i/n) with the remainder spread by largest
    fractional part (ties: larger cluster, then lower cluster id)."""
    exact = [k * ni / n for ni in sizes]
    quotas = [math.floor(e) for e in exact]
    remainder = k - sum(quotas)
    order = sorted(
        range(len(sizes)),
        key=lambda i: (-(exact[i] - quotas[i]), -sizes[i], i),
    )
    for i in order[:remainder]:
        quotas[i] += 1
    return quotas


def sample_stratified_blocks(
    article: Article,
    emb: EmbeddingMatrix,
    clusters: ClusterAssignment,
    k: int,
    count: int,
    rng: np.random.Generator,
) -> list[BlockIndex]:
    """`count` blocks drawn per-cluster so every topic contributes
    proportionally to each block."""
    n = article.n
    if clusters.n != n:
        raise ValueError(f"cluster assignment covers {clusters.n} sentences, article has {n}")
    if k < 1 or k > n:
        raise ValueError(f"k must be in 1..{n}, got {k}")
    quotas = _stratified_quotas(clusters.sizes, k, n)
    members = [np.array(clusters.members(i)) for i in range(clusters.m)]
    out = []
    for _ in range(count):
        picked: list[int] = []
        for q, mem in zip(quotas, members):
            if q > 0:
                picked.extend(int(x) for x in rng.choice(mem, size=q, replace=False))
        out.append(BlockIndex(tuple(sorted(picked))))
    return out


def csd1_approx(
    article: Article,
    emb: EmbeddingMatrix,
    k: int,
    n_uniform: int = DEFAULT_UNIFORM_BLOCKS,
    n_strat: int = DEFAULT_STRATIFIED_BLOCKS,
    seed: int = 42,
    jobs: int = 1,
    force_sampling: bool = False,
) -> CsdCurve:
    """Approximate CSD-1 from uniform plus cluster-stratified block samples.

    When C(n, k) does not exceed the sampling budget the exact enumeration
    is returned instead (mode "exact"); force_sampling disables the
    fallback, which only testing should need.

    The union of the two samples is deduplicated by canonical index tuple;
    rank fractions are normalized by the distinct count.  All random draws
    happen serially before (possibly parallel) scoring, so `jobs` never
    changes the result.
    """
    n = article.n
    if emb.n != n:
        raise ValueError(f"embeddings have {emb.n} rows for {n} sentences")
    total = binomial(n, k)
    if not force_sampling and total <= n_uniform + n_strat:
        return csd1_exact(article, emb, k, cap=max(total, 1), jobs=jobs)

    rng = np.random.default_rng(seed)
    uniform = sample_uniform_blocks(n, k, n_uniform, rng)
    clusters = cluster_ap(similarity_matrix(emb))
    stratified = sample_stratified_blocks(article, emb, clusters, k, n_strat, rng)
    distinct = sorted({b.indices for b in uniform} | {b.indices for b in stratified})
    scores = score_blocks(emb, distinct, jobs=jobs)
    xs, ys = _sorted_curve_arrays(distinct, scores)
    return CsdCurve(
        xs=xs,
        ys=ys,
        k=k,
        n=n,
        mode="approx",
        sample_count=len(distinct),
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Segments, aggregation, baseline articles
# ---------------------------------------------------------------------------


def _knee(grid: np.ndarray, y: np.ndarray, lo: int, hi: int, cand_lo: int, cand_hi: int):
    """Index in [cand_lo, cand_hi] farthest (perpendicular) from the chord
    through grid points lo and hi, plus that distance."""
    ax, ay = grid[lo], y[lo]
    bx, by = grid[hi], y[hi]
    length = math.hypot(bx - ax, by - ay)
    if length == 0.0:
        return cand_lo, 0.0
    px = grid[cand_lo : cand_hi + 1]
    py = y[cand_lo : cand_hi + 1]
    dist = np.abs((bx - ax) * (py - ay) - (by - ay) * (px - ax)) / length
    best = int(np.argmax(dist))
    return cand_lo + best, float(dist[best])


def detect_segments(curve: CsdCurve) -> Segments:
    """L/M/R boundaries via maximal chord distance on a 101-point resample.

    The left boundary maximizes the distance to the chord from (0, y(0)) to
    (0.5, y(0.5)) over x in (0, 0.5]; the right boundary mirrors this on
    (0.5, 1).  A flat curve (y-range below 1e-6) yields a flagged
    placeholder at (1/3, 2/3).
    """
    if curve.sample_count < 10:
        raise ValueError(f"need at least 10 curve points, got {curve.sample_count}")
    grid = np.linspace(0.0, 1.0, 101)
    y = np.interp(grid, curve.xs, curve.ys)
    if float(y.max() - y.min()) < 1e-6:
        return Segments(l_end=1 / 3, r_start=2 / 3, degenerate=True, low_confidence=True)
    l_idx, l_dist = _knee(grid, y, 0, 50, 1, 50)
    r_idx, r_dist = _knee(grid, y, 50, 100, 51, 99)
    return Segments(
        l_end=float(grid[l_idx]),
        r_start=float(grid[r_idx]),
        low_confidence=min(l_dist, r_dist) < 0.005,
    )


def aggregate_curves(curves: list[CsdCurve], stat: str = "mean") -> CsdCurve:
    """Pointwise mean or median after resampling every curve onto the
    common grid x = j/100, j = 1..100."""
    if not curves:
        raise ValueError("cannot aggregate an empty curve list")
    if stat not in ("mean", "median"):
        raise ValueError(f"stat must be mean or median, got {stat!r}")
    resampled = np.stack([np.interp(AGGREGATE_GRID, c.xs, c.ys) for c in curves])
    # column sort fixes the reduction order, making the aggregate bitwise
    # invariant to the order of the input list
    resampled = np.sort(resampled, axis=0)
    ys = resampled.mean(axis=0) if stat == "mean" else np.median(resampled, axis=0)
    ks = {c.k for c in curves}
    ns = {c.n for c in curves}
    return CsdCurve(
        xs=AGGREGATE_GRID.copy(),
        ys=ys,
        k=ks.pop() if len(ks) == 1 else 0,
        n=ns.pop() if len(ns) == 1 else 0,
        mode="exact" if all(c.mode == "exact" for c in curves) else "approx",
        sample_count=AGGREGATE_GRID.size,
        members=len(curves),
        stat=stat,
    )


def make_scrambled_article(
    corpus: list[Article],
    m: int = 20,
    rng: np.random.Generator | None = None,
) -> Article:
    """Baseline article: one random sentence from each of m distinct corpus
    articles, in random order, with the sources recorded in the id."""
    if rng is None:
        rng = np.random.default_rng(42)
    if len(corpus) < m:
        raise ValueError(f"need at least {m} source articles, got {len(corpus)}")
    chosen = rng.choice(len(corpus), size=m, replace=False)
    picks = []
    for ai in chosen:
        art = corpus[int(ai)]
        si = int(rng.integers(1, art.n + 1))
        picks.append((art.id, si, art.sentences[si - 1]))
    order = rng.permutation(m)
    picks = [picks[int(i)] for i in order]
    provenance = ",".join(f"{aid}:{si}" for aid, si, _ in picks)
    return Article(id=f"scrambled[{provenance}]", sentences=tuple(s for _, _, s in picks))
