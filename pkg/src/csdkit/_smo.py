"""Binary soft-margin SVM trained by sequential minimal optimization.

Working-set selection is the maximal-violating-pair rule on the dual
gradient; the two-variable subproblem is solved analytically with box
clipping.  Everything is deterministic: ties in the pair selection resolve
to the smallest index and no randomness enters anywhere, so identical
inputs always produce identical support sets.
"""

from __future__ import annotations

import numpy as np

__all__ = ["rbf_kernel", "smo_train"]


def rbf_kernel(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    """exp(-gamma * ||a_i - b_j||^2) for all row pairs."""
    sq = (
        np.sum(a * a, axis=1)[:, None]
        + np.sum(b * b, axis=1)[None, :]
        - 2.0 * (a @ b.T)
    )
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-gamma * sq)


def smo_train(
    kernel: np.ndarray,
    y: np.ndarray,
    c: float,
    tol: float = 1e-3,
    max_iter: int = 10000,
) -> tuple[np.ndarray, float, int, bool]:
    """Maximize the SVM dual for labels y in {-1, +1}.

    Returns (alpha, bias, iterations, converged); the decision value of a
    point x is sum_i alpha_i y_i K(x_i, x) + bias.
    """
    m = y.size
    alpha = np.zeros(m)
    f = np.zeros(m)  # F_i = sum_j alpha_j y_j K_ij, bias-free decision values
    pos = y > 0
    it = 0
    converged = False

    for it in range(1, max_iter + 1):
        viol = y - f
        up = (pos & (alpha < c - 1e-12)) | (~pos & (alpha > 1e-12))
        low = (~pos & (alpha < c - 1e-12)) | (pos & (alpha > 1e-12))
        if not up.any() or not low.any():
            converged = True
            break
        masked_up = np.where(up, viol, -np.inf)
        masked_low = np.where(low, viol, np.inf)
        i = int(np.argmax(masked_up))
        j = int(np.argmin(masked_low))
        gap = masked_up[i] - masked_low[j]
        if gap <= tol:
            converged = True
            break

        yi, yj = y[i], y[j]
        ai_old, aj_old = alpha[i], alpha[j]
        if yi != yj:
            lo = max(0.0, aj_old - ai_old)
            hi = min(c, c + aj_old - ai_old)
        else:
            lo = max(0.0, ai_old + aj_old - c)
            hi = min(c, ai_old + aj_old)
        if hi - lo < 1e-15:
            break  # pair is pinned; further progress impossible

        # E_i - E_j is bias-free: errors E = F - y
        ei = f[i] - yi
        ej = f[j] - yj
        eta = kernel[i, i] + kernel[j, j] - 2.0 * kernel[i, j]
        if eta > 1e-12:
            aj_new = aj_old + yj * (ei - ej) / eta
            aj_new = min(max(aj_new, lo), hi)
        else:
            # flat direction (duplicate points): dual objective is linear in
            # alpha_j, walk to the better box edge
            slope = yj * (ei - ej)
            if slope > 0.0:
                aj_new = lo
            elif slope < 0.0:
                aj_new = hi
            else:
                break
        if abs(aj_new - aj_old) < 1e-14:
            break
        ai_new = ai_old + yi * yj * (aj_old - aj_new)

        alpha[i] = ai_new
        alpha[j] = aj_new
        f += (ai_new - ai_old) * yi * kernel[i] + (aj_new - aj_old) * yj * kernel[j]

    viol = y - f
    up = (pos & (alpha < c - 1e-12)) | (~pos & (alpha > 1e-12))
    low = (~pos & (alpha < c - 1e-12)) | (pos & (alpha > 1e-12))
    hi_v = float(np.max(np.where(up, viol, -np.inf))) if up.any() else 0.0
    lo_v = float(np.min(np.where(low, viol, np.inf))) if low.any() else 0.0
    if not np.isfinite(hi_v):
        hi_v = lo_v
    if not np.isfinite(lo_v):
        lo_v = hi_v
    bias = (hi_v + lo_v) / 2.0
    return alpha, bias, it, converged
