"""Beta-distribution machinery for analytic CSD-1 approximations.

A typical CSD-1 curve resembles the complement of the CDF of a U-shape
beta density (both shape parameters inside (0, 1)) after a linear squeeze:

    lc(x) = a * (1 - I_x(alpha, beta)) + b,   a, b >= 0, a + b <= 1

I_x is evaluated with the continued-fraction expansion (Lentz's method),
switching to the symmetric tail I_x(a, b) = 1 - I_{1-x}(b, a) when x is
past the distribution's bulk, which keeps the fraction well-conditioned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

__all__ = [
    "LcParams",
    "reg_inc_beta",
    "beta_ccdf",
    "lc_transform",
    "fit_lc",
    "FitResult",
]

# Fit box for the shape parameters; the open-interval edges make the
# continued fraction ill-conditioned, so the optimizer never goes there.
ALPHA_BETA_BOX = (0.05, 0.95)

_CF_EPS = 1e-16
_CF_TINY = 1e-300
_CF_MAX_ITER = 400


@dataclass(frozen=True)
class LcParams:
    """Parameters of the linearly transformed beta CCDF curve."""

    a: float
    b: float
    alpha: float
    beta: float

    def __post_init__(self):
        if self.a < 0.0 or self.b < 0.0:
            raise ValueError(f"a and b must be non-negative, got a={self.a}, b={self.b}")
        if self.a + self.b > 1.0 + 1e-12:
            raise ValueError(f"a + b must not exceed 1, got {self.a + self.b}")
        if not (0.0 < self.alpha < 1.0) or not (0.0 < self.beta < 1.0):
            raise ValueError(
                f"alpha and beta must lie strictly inside (0, 1), "
                f"got alpha={self.alpha}, beta={self.beta}"
            )


@dataclass(frozen=True)
class FitResult:
    params: LcParams
    rmse: float


def _beta_cf(x: float, a: float, b: float) -> float:
    """Continued fraction for the incomplete beta (Numerical Recipes form),
    evaluated with Lentz's algorithm."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _CF_TINY:
        d = _CF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise RuntimeError(f"incomplete beta continued fraction stalled at a={a}, b={b}, x={x}")


def reg_inc_beta(x: float, alpha: float, beta: float) -> float:
    """Regularized incomplete beta I_x(alpha, beta), the Beta CDF.

    Absolute accuracy ~1e-10 over the open unit interval; exactly 0 at x=0
    and 1 at x=1.
    """
    if alpha <= 0.0 or beta <= 0.0:
        raise ValueError(f"shape parameters must be positive, got ({alpha}, {beta})")
    if x < 0.0 or x > 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    ln_front = (
        math.lgamma(alpha + beta)
        - math.lgamma(alpha)
        - math.lgamma(beta)
        + alpha * math.log(x)
        + beta * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (alpha + 1.0) / (alpha + beta + 2.0):
        return front * _beta_cf(x, alpha, beta) / alpha
    return 1.0 - front * _beta_cf(1.0 - x, beta, alpha) / beta


def beta_ccdf(x: float, alpha: float, beta: float) -> float:
    """Complement 1 - I_x(alpha, beta); 1 at x=0, 0 at x=1."""
    return 1.0 - reg_inc_beta(x, alpha, beta)


def lc_transform(x: float, params: LcParams) -> float:
    """a * ccdf(x) + b; non-increasing in x with range inside [b, a+b]."""
    return params.a * beta_ccdf(x, params.alpha, params.beta) + params.b


def _ccdf_vec(xs: np.ndarray, alpha: float, beta: float) -> np.ndarray:
    return np.array([beta_ccdf(float(x), alpha, beta) for x in xs])


def _linear_ab(cvals: np.ndarray, ys: np.ndarray) -> tuple[float, float]:
    """Least-squares (a, b) for ys ~ a*cvals + b, projected into the
    feasible triangle a, b >= 0, a + b <= 1."""
    cbar = cvals.mean()
    ybar = ys.mean()
    denom = float(np.sum((cvals - cbar) ** 2))
    if denom < 1e-18:
        a = 0.0
    else:
        a = float(np.sum((cvals - cbar) * (ys - ybar)) / denom)
    a = min(max(a, 0.0), 1.0)
    b = min(max(ybar - a * cbar, 0.0), 1.0)
    if a + b > 1.0:
        # Slide along a + b = 1 toward the unconstrained optimum.
        excess = a + b - 1.0
        a = max(0.0, a - excess)
        b = 1.0 - a
    return a, b


def fit_lc(curve) -> FitResult:
    """Least-squares LcParams for a CSD-1 curve.

    Coarse grid over (alpha, beta) with closed-form (a, b) per grid point
    seeds a Nelder-Mead refinement of all four parameters; the box
    constraints are enforced by clipping/projection inside the objective.
    Always returns the best parameters found together with the RMSE.
    """
    xs = np.asarray(curve.xs, dtype=np.float64)
    ys = np.asarray(curve.ys, dtype=np.float64)
    if xs.size < 10:
        raise ValueError(f"need at least 10 curve points to fit, got {xs.size}")

    lo, hi = ALPHA_BETA_BOX

    def clipped(theta):
        al = min(max(theta[0], lo), hi)
        be = min(max(theta[1], lo), hi)
        a = min(max(theta[2], 0.0), 1.0)
        b = min(max(theta[3], 0.0), 1.0)
        if a + b > 1.0:
            excess = a + b - 1.0
            a = max(0.0, a - excess)
            b = 1.0 - a
        return al, be, a, b

    def objective(theta):
        al, be, a, b = clipped(theta)
        pred = a * _ccdf_vec(xs, al, be) + b
        return float(np.mean((pred - ys) ** 2))

    best_theta = None
    best_mse = np.inf
    grid = np.arange(0.1, 0.95, 0.1)
    for al in grid:
        for be in grid:
            cvals = _ccdf_vec(xs, al, be)
            a, b = _linear_ab(cvals, ys)
            mse = float(np.mean((a * cvals + b - ys) ** 2))
            if mse < best_mse:
                best_mse = mse
                best_theta = np.array([al, be, a, b])

    res = minimize(
        objective,
        best_theta,
        method="Nelder-Mead",
        options={"xatol": 1e-6, "fatol": 1e-12, "maxiter": 2000},
    )
    theta = res.x if res.fun <= best_mse else best_theta
    al, be, a, b = clipped(theta)
    mse = objective(theta)
    return FitResult(params=LcParams(a=a, b=b, alpha=al, beta=be), rmse=math.sqrt(mse))
