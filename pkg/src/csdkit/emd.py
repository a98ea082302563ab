"""Earth Mover's Distance over weighted embedding point clouds.

The similarity used by every CSD computation is

    mover_score(X, Y) = 1 - EMD(X, Y)

under the ground cost (1 - cos)/2, which keeps EMD (and hence the score)
inside [0, 1].

The exact solver is the MODI transportation simplex: northwest-corner
initial basis, dual (u, v) computation over the basis spanning tree,
most-negative-reduced-cost entering rule, and cycle pivots.  It is compiled
with numba because CSD curves solve tens of thousands of small instances
per article.  A degenerate pivot stall is escaped by re-solving with a
deterministic 1e-13-scale perturbation of the marginals, which moves the
optimal cost by far less than any tolerance used downstream.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.special import logsumexp

__all__ = [
    "WeightedPointCloud",
    "TransportPlan",
    "SinkhornResult",
    "cost_matrix",
    "solve_emd_exact",
    "solve_emd_sinkhorn",
    "mover_score",
]

# Exact mode is the default up to this cloud size; beyond it the auto policy
# switches to Sinkhorn (epsilon 0.01).
EXACT_MAX_SOURCE = 64
EXACT_MAX_TARGET = 512

DEFAULT_EPSILON = 0.01
DEFAULT_SINKHORN_MAX_ITER = 1000


@dataclass(frozen=True)
class WeightedPointCloud:
    """Points with a probability distribution over them.

    All vectors share one dimension; weights are non-negative and sum to 1
    within 1e-9.
    """

    points: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        w = np.asarray(self.weights, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise ValueError(f"cloud needs at least one point, got shape {pts.shape}")
        if w.shape != (pts.shape[0],):
            raise ValueError(f"weights shape {w.shape} does not match {pts.shape[0]} points")
        if np.any(w < 0.0):
            raise ValueError("weights must be non-negative")
        total = float(w.sum())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"weights must sum to 1 within 1e-9, got {total!r}")
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, points: np.ndarray) -> "WeightedPointCloud":
        pts = np.asarray(points, dtype=np.float64)
        m = pts.shape[0]
        return cls(pts, np.full(m, 1.0 / m))

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class TransportPlan:
    """Optimal flow and its cost; row sums equal source weights, column sums
    equal target weights (within 1e-8)."""

    flow: np.ndarray = field(repr=False)
    cost: float = 0.0


@dataclass(frozen=True)
class SinkhornResult:
    """Entropic-regularized transport cost; `converged` is False when the
    marginal violation never fell below 1e-6 within the iteration budget."""

    cost: float
    converged: bool
    iterations: int


def cost_matrix(x: WeightedPointCloud, y: WeightedPointCloud) -> np.ndarray:
    """Ground cost C[i][j] = (1 - cos(x_i, y_j)) / 2, clamped to [0, 1].

    Entries below 1e-15 are snapped to exactly zero so that identical points
    cost exactly nothing (this makes mover_score(X, X) == 1.0 exact despite
    unit-normalization round-off).
    """
    if x.dim != y.dim:
        raise ValueError(f"dimension mismatch: {x.dim} vs {y.dim}")
    return _ground_cost(x.points, y.points)


def pairwise_cost(rows: np.ndarray) -> np.ndarray:
    """Self ground-cost matrix of one embedding set.

    Block scoring slices rows out of this matrix instead of recomputing
    cosines per block.
    """
    rows = np.asarray(rows, dtype=np.float64)
    return _ground_cost(rows, rows)


def _ground_cost(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    c = (1.0 - a @ b.T) * 0.5
    np.clip(c, 0.0, 1.0, out=c)
    c[c < 1e-15] = 0.0
    return c


# ---------------------------------------------------------------------------
# Exact solver (MODI transportation simplex)
# ---------------------------------------------------------------------------


@njit(cache=True)
def _modi_kernel(supply, demand, cost, enter_tol, max_pivots):  # pragma: no cover
    """Solve the balanced transportation problem; returns (flow, status).

    status 0: optimal; 1: pivot budget exhausted (caller retries perturbed).
    All supplies and demands must be strictly positive.
    """
    m = supply.shape[0]
    n = demand.shape[0]
    nb = m + n - 1

    flow = np.zeros((m, n))
    basis_i = np.empty(nb, dtype=np.int64)
    basis_j = np.empty(nb, dtype=np.int64)
    is_basis = np.zeros((m, n), dtype=np.uint8)

    # Northwest-corner start: a staircase of exactly m+n-1 cells, which is
    # always a spanning tree of the bipartite row/column graph.
    s_rem = supply.copy()
    d_rem = demand.copy()
    i = 0
    j = 0
    t = 0
    while True:
        q = s_rem[i] if s_rem[i] < d_rem[j] else d_rem[j]
        flow[i, j] = q
        basis_i[t] = i
        basis_j[t] = j
        is_basis[i, j] = 1
        t += 1
        s_rem[i] -= q
        d_rem[j] -= q
        if i == m - 1 and j == n - 1:
            break
        if s_rem[i] == 0.0 and i < m - 1:
            i += 1
        else:
            j += 1

    u = np.empty(m)
    v = np.empty(n)
    u_set = np.empty(m, dtype=np.uint8)
    v_set = np.empty(n, dtype=np.uint8)

    # Cycle search scratch: nodes 0..m-1 are rows, m..m+n-1 are columns.
    nn = m + n
    parent_node = np.empty(nn, dtype=np.int64)
    parent_cell = np.empty(nn, dtype=np.int64)
    visited = np.empty(nn, dtype=np.uint8)
    queue = np.empty(nn, dtype=np.int64)
    cyc_i = np.empty(nb + 1, dtype=np.int64)
    cyc_j = np.empty(nb + 1, dtype=np.int64)

    pivots = 0
    while True:
        # Duals from the basis tree: u[0] anchored at 0, then propagate
        # u_i + v_j = c_ij across basis cells until all are set.
        for a in range(m):
            u_set[a] = 0
        for b in range(n):
            v_set[b] = 0
        u[0] = 0.0
        u_set[0] = 1
        remaining = m + n - 1
        while remaining > 0:
            progressed = False
            for t in range(nb):
                bi = basis_i[t]
                bj = basis_j[t]
                if u_set[bi] == 1 and v_set[bj] == 0:
                    v[bj] = cost[bi, bj] - u[bi]
                    v_set[bj] = 1
                    remaining -= 1
                    progressed = True
                elif v_set[bj] == 1 and u_set[bi] == 0:
                    u[bi] = cost[bi, bj] - v[bj]
                    u_set[bi] = 1
                    remaining -= 1
                    progressed = True
            if not progressed:
                return flow, 1  # disconnected basis: numerical trouble

        # Entering cell: most negative reduced cost, first by (i, j) on ties.
        # After a long stall, switch to Bland's rule (first negative cell)
        # to break potential degenerate cycling.
        bland = pivots > 20 * (m + n)
        best = -enter_tol
        ei = -1
        ej = -1
        for a in range(m):
            ua = u[a]
            for b in range(n):
                if is_basis[a, b] == 1:
                    continue
                r = cost[a, b] - ua - v[b]
                if bland:
                    if r < -enter_tol:
                        ei = a
                        ej = b
                        break
                elif r < best:
                    best = r
                    ei = a
                    ej = b
            if bland and ei >= 0:
                break
        if ei < 0:
            return flow, 0  # optimal

        # Unique cycle: path from row node ei to column node m+ej through
        # basis edges, plus the entering cell.
        for a in range(nn):
            visited[a] = 0
        head = 0
        tail = 0
        queue[tail] = ei
        tail += 1
        visited[ei] = 1
        parent_node[ei] = -1
        parent_cell[ei] = -1
        target = m + ej
        while head < tail:
            node = queue[head]
            head += 1
            if node == target:
                break
            for t in range(nb):
                bi = basis_i[t]
                bj = basis_j[t]
                if node < m:
                    if bi != node:
                        continue
                    nxt = m + bj
                else:
                    if bj != node - m:
                        continue
                    nxt = bi
                if visited[nxt] == 0:
                    visited[nxt] = 1
                    parent_node[nxt] = node
                    parent_cell[nxt] = t
                    queue[tail] = nxt
                    tail += 1
        if visited[target] == 0:
            return flow, 1  # no cycle found: numerical trouble

        # Collect cycle cells: entering first, then basis cells walking back
        # from the target column to the entering row.  Odd positions donate.
        cyc_i[0] = ei
        cyc_j[0] = ej
        ncyc = 1
        node = target
        while parent_cell[node] >= 0:
            t = parent_cell[node]
            cyc_i[ncyc] = basis_i[t]
            cyc_j[ncyc] = basis_j[t]
            ncyc += 1
            node = parent_node[node]

        theta = np.inf
        leave_pos = -1
        for p in range(1, ncyc, 2):
            fp = flow[cyc_i[p], cyc_j[p]]
            if fp < theta:
                theta = fp
                leave_pos = p
        for p in range(ncyc):
            if p % 2 == 0:
                flow[cyc_i[p], cyc_j[p]] += theta
            else:
                flow[cyc_i[p], cyc_j[p]] -= theta
        li = cyc_i[leave_pos]
        lj = cyc_j[leave_pos]
        flow[li, lj] = 0.0

        # Swap leaving basis cell for the entering one.
        for t in range(nb):
            if basis_i[t] == li and basis_j[t] == lj:
                basis_i[t] = ei
                basis_j[t] = ej
                break
        is_basis[li, lj] = 0
        is_basis[ei, ej] = 1

        pivots += 1
        if pivots >= max_pivots:
            return flow, 1


def _solve_positive(wx: np.ndarray, wy: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Exact flow for strictly positive marginals."""
    m, n = c.shape
    if m == 1:
        return wy.reshape(1, n).copy()
    if n == 1:
        return wx.reshape(m, 1).copy()
    max_pivots = 200 * (m + n) + 2000
    flow, status = _modi_kernel(wx, wy, c, 1e-11, max_pivots)
    if status != 0:
        # Deterministic tiny perturbation breaks degenerate ties; the cost
        # shift is bounded by (m+n) * 1e-13 * max|C|, far below 1e-9.
        px = wx + 1e-13 * np.arange(1, m + 1)
        py = wy.copy()
        py[-1] += float(px.sum() - wy.sum())
        flow, status = _modi_kernel(px, py, c, 1e-11, max_pivots)
        if status != 0:
            raise RuntimeError("transportation simplex failed to terminate")
    return flow


def solve_emd_exact(wx: np.ndarray, wy: np.ndarray, c: np.ndarray) -> TransportPlan:
    """Optimal transport between distributions wx and wy under cost matrix c.

    Zero-weight rows and columns are dropped before solving and reappear as
    zero rows/columns of the returned flow.
    """
    wx = np.asarray(wx, dtype=np.float64)
    wy = np.asarray(wy, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    if wx.ndim != 1 or wy.ndim != 1 or c.shape != (wx.size, wy.size):
        raise ValueError(
            f"shape mismatch: wx {wx.shape}, wy {wy.shape}, cost {c.shape}"
        )
    if np.any(c < 0.0):
        raise ValueError("cost matrix must be non-negative")
    keep_x = wx > 0.0
    keep_y = wy > 0.0
    if not keep_x.any() or not keep_y.any():
        raise ValueError("cannot transport between empty (all-zero-weight) clouds")

    if keep_x.all() and keep_y.all():
        flow = _solve_positive(wx, wy, c)
    else:
        sub = _solve_positive(wx[keep_x], wy[keep_y], c[np.ix_(keep_x, keep_y)])
        flow = np.zeros_like(c)
        flow[np.ix_(keep_x, keep_y)] = sub
    return TransportPlan(flow=flow, cost=float(np.sum(flow * c)))


# ---------------------------------------------------------------------------
# Sinkhorn approximation
# ---------------------------------------------------------------------------


def solve_emd_sinkhorn(
    wx: np.ndarray,
    wy: np.ndarray,
    c: np.ndarray,
    epsilon: float = DEFAULT_EPSILON,
    max_iter: int = DEFAULT_SINKHORN_MAX_ITER,
) -> SinkhornResult:
    """Entropic-regularized transport cost via log-domain Sinkhorn scaling.

    Stops when the column-marginal violation drops below 1e-6 (row marginals
    are exact by construction after each source update) or after max_iter
    sweeps, in which case the result is flagged unconverged.
    """
    if epsilon <= 0.0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if max_iter < 1:
        raise ValueError(f"max_iter must be positive, got {max_iter}")
    wx = np.asarray(wx, dtype=np.float64)
    wy = np.asarray(wy, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    keep_x = wx > 0.0
    keep_y = wy > 0.0
    if not keep_x.any() or not keep_y.any():
        raise ValueError("cannot transport between empty (all-zero-weight) clouds")
    wx = wx[keep_x]
    wy = wy[keep_y]
    c = c[np.ix_(keep_x, keep_y)]

    lwx = np.log(wx)
    lwy = np.log(wy)
    f = np.zeros(wx.size)
    g = np.zeros(wy.size)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        g = -epsilon * logsumexp((f[:, None] - c) / epsilon + lwx[:, None], axis=0)
        f = -epsilon * logsumexp((g[None, :] - c) / epsilon + lwy[None, :], axis=1)
        plan = np.exp(
            (f[:, None] + g[None, :] - c) / epsilon + lwx[:, None] + lwy[None, :]
        )
        violation = float(np.max(np.abs(plan.sum(axis=0) - wy)))
        if violation < 1e-6:
            converged = True
            break
    plan = np.exp((f[:, None] + g[None, :] - c) / epsilon + lwx[:, None] + lwy[None, :])
    return SinkhornResult(cost=float(np.sum(plan * c)), converged=converged, iterations=it)


# ---------------------------------------------------------------------------
# MoverScore
# ---------------------------------------------------------------------------


def mover_score(
    block: WeightedPointCloud,
    article: WeightedPointCloud,
    mode: str = "auto",
) -> float:
    """Similarity MSc(X, Y) = 1 - EMD(X, Y) in [0, 1]; symmetric; MSc(T,T)=1.

    mode "auto" uses the exact solver up to 64x512 clouds and Sinkhorn
    (epsilon 0.01) beyond.
    """
    c = cost_matrix(block, article)
    if mode == "auto":
        small = block.size <= EXACT_MAX_SOURCE and article.size <= EXACT_MAX_TARGET
        mode = "exact" if small else "sinkhorn"
    if mode == "exact":
        cost = solve_emd_exact(block.weights, article.weights, c).cost
    elif mode == "sinkhorn":
        cost = solve_emd_sinkhorn(block.weights, article.weights, c).cost
    else:
        raise ValueError(f"unknown mode {mode!r} (expected exact, sinkhorn, or auto)")
    return min(1.0, max(0.0, 1.0 - cost))
