"""Affinity Propagation clustering of sentence embeddings.

Used to stratify block sampling: blocks drawn per-cluster cover the
article's topics better than pure uniform draws.

The implementation is the standard responsibility/availability message
passing with damping.  Defaults (damping 0.5, 200 iterations, convergence
window 15, preference = median similarity) follow the algorithm's published
defaults.  No degeneracy-breaking noise is injected, so results are fully
deterministic; if message passing identifies no exemplar at all, the result
falls back to a single flagged cluster so downstream sampling can always
proceed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .textmodel import EmbeddingMatrix

__all__ = ["ClusterAssignment", "similarity_matrix", "cluster_ap"]


@dataclass(frozen=True)
class ClusterAssignment:
    """Exemplar sentences (1-based indices), per-sentence cluster labels
    (0..m-1), and cluster sizes."""

    exemplars: tuple[int, ...]
    labels: tuple[int, ...]
    converged: bool
    fallback: bool = False

    def __post_init__(self):
        if len(self.exemplars) < 1:
            raise ValueError("at least one cluster required")
        counts = [0] * len(self.exemplars)
        for lab in self.labels:
            counts[lab] += 1
        for e, lab_of_e in zip(self.exemplars, range(len(self.exemplars))):
            if self.labels[e - 1] != lab_of_e:
                raise ValueError(f"exemplar {e} not assigned to its own cluster")
        object.__setattr__(self, "_sizes", tuple(counts))

    @property
    def m(self) -> int:
        return len(self.exemplars)

    @property
    def sizes(self) -> tuple[int, ...]:
        return self._sizes  # type: ignore[attr-defined]

    @property
    def n(self) -> int:
        return len(self.labels)

    def members(self, cluster: int) -> list[int]:
        """1-based sentence indices of one cluster."""
        return [i + 1 for i, lab in enumerate(self.labels) if lab == cluster]


def similarity_matrix(emb: EmbeddingMatrix) -> np.ndarray:
    """Negative squared euclidean similarities with the diagonal set to the
    preference (median of off-diagonal similarities)."""
    rows = emb.rows
    n = rows.shape[0]
    sq = np.sum(rows * rows, axis=1)
    s = -(sq[:, None] + sq[None, :] - 2.0 * (rows @ rows.T))
    np.minimum(s, 0.0, out=s)  # squared distances cannot be negative
    if n == 1:
        s[0, 0] = 0.0
        return s
    off = s[~np.eye(n, dtype=bool)]
    np.fill_diagonal(s, float(np.median(off)))
    return s


def cluster_ap(
    s: np.ndarray,
    damping: float = 0.5,
    max_iter: int = 200,
    conv_window: int = 15,
) -> ClusterAssignment:
    """Cluster by responsibility/availability message passing on a
    precomputed similarity matrix (diagonal = preference)."""
    s = np.asarray(s, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError(f"similarity matrix must be square, got {s.shape}")
    if not (0.5 <= damping < 1.0):
        raise ValueError(f"damping must be in [0.5, 1), got {damping}")
    n = s.shape[0]
    if n == 1:
        return ClusterAssignment(exemplars=(1,), labels=(0,), converged=True)

    r = np.zeros((n, n))
    a = np.zeros((n, n))
    idx = np.arange(n)
    prev_exemplars: np.ndarray | None = None
    stable = 0
    converged = False

    for _ in range(max_iter):
        # Responsibilities: r(i,k) = s(i,k) - max_{k' != k} (a(i,k') + s(i,k'))
        asum = a + s
        first = np.argmax(asum, axis=1)
        best = asum[idx, first]
        asum[idx, first] = -np.inf
        second = np.max(asum, axis=1)
        asum[idx, first] = best
        r_new = s - best[:, None]
        r_new[idx, first] = s[idx, first] - second
        r = damping * r + (1.0 - damping) * r_new

        # Availabilities: a(i,k) = min(0, r(k,k) + sum_{i' not in {i,k}} max(0, r(i',k)))
        rp = np.maximum(r, 0.0)
        rp[idx, idx] = r[idx, idx]
        colsum = rp.sum(axis=0)
        a_new = colsum[None, :] - rp
        diag = a_new[idx, idx].copy()
        np.minimum(a_new, 0.0, out=a_new)
        a_new[idx, idx] = diag
        a = damping * a + (1.0 - damping) * a_new

        exemplars = np.flatnonzero(np.diag(a) + np.diag(r) > 0.0)
        if prev_exemplars is not None and np.array_equal(exemplars, prev_exemplars):
            stable += 1
            if stable >= conv_window and exemplars.size > 0:
                converged = True
                break
        else:
            stable = 0
        prev_exemplars = exemplars

    exemplars = np.flatnonzero(np.diag(a) + np.diag(r) > 0.0)
    if exemplars.size == 0:
        # Pathological non-convergence: one flagged cluster around the point
        # of maximal total similarity.
        center = int(np.argmax(s.sum(axis=1)))
        return ClusterAssignment(
            exemplars=(center + 1,),
            labels=(0,) * n,
            converged=False,
            fallback=True,
        )

    labels = np.argmax(s[:, exemplars], axis=1)
    labels[exemplars] = np.arange(exemplars.size)
    return ClusterAssignment(
        exemplars=tuple(int(e) + 1 for e in exemplars),
        labels=tuple(int(x) for x in labels),
        converged=converged,
    )
