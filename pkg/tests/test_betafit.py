import math

import numpy as np
import pytest
from scipy.integrate import quad

from csdkit.betafit import (
    FitResult,
    LcParams,
    beta_ccdf,
    fit_lc,
    lc_transform,
    reg_inc_beta,
)
from csdkit.csd1 import CsdCurve


def quadrature_oracle(x: float, alpha: float, beta: float) -> float:
    """I_x via adaptive quadrature of the density.

    The substitution t = u**(1/alpha) removes the left-endpoint singularity
    (alpha < 1), leaving a smooth integrand; this path never touches the
    continued-fraction code it checks.
    """
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    integrand = lambda u: (1.0 - u ** (1.0 / alpha)) ** (beta - 1.0)
    val, _ = quad(integrand, 0.0, x**alpha, epsabs=1e-13, epsrel=1e-13, limit=200)
    ln_beta = math.lgamma(alpha) + math.lgamma(beta) - math.lgamma(alpha + beta)
    return val / alpha / math.exp(ln_beta)


# the three parameter sets the analytic curves are reported for
PAPER_PARAM_SETS = [
    (0.38, 0.55, 0.45, 0.3),
    (0.6, 0.05, 0.4, 0.35),
    (0.1, 0.8, 0.4, 0.25),
]


def sampled_curve(params: LcParams) -> CsdCurve:
    xs = np.arange(1, 101) / 100.0
    ys = np.array([lc_transform(float(x), params) for x in xs])
    return CsdCurve(xs=xs, ys=ys, k=5, n=20, mode="approx", sample_count=100, seed=0)


def noisy_samples(params: LcParams, sigma: float, seed: int):
    """Raw noisy observations; deliberately not forced into curve shape so
    the noise stays unbiased."""
    from types import SimpleNamespace

    xs = np.arange(1, 101) / 100.0
    clean = np.array([lc_transform(float(x), params) for x in xs])
    ys = clean + np.random.default_rng(seed).normal(0.0, sigma, xs.size)
    return SimpleNamespace(xs=xs, ys=ys)


class TestLcParams:
    @pytest.mark.parametrize(
        "a,b,alpha,beta",
        [(-0.1, 0.5, 0.5, 0.5), (0.6, 0.6, 0.5, 0.5), (0.3, 0.3, 1.2, 0.5), (0.3, 0.3, 0.5, 0.0)],
    )
    def test_invalid(self, a, b, alpha, beta):
        with pytest.raises(ValueError):
            LcParams(a, b, alpha, beta)


class TestRegIncBeta:
    def test_uniform_case_is_identity(self):
        for x in (0.0, 0.25, 0.5, 1.0):
            assert reg_inc_beta(x, 1.0, 1.0) == pytest.approx(x, abs=1e-12)

    def test_symmetric_parameters_at_half(self):
        for alpha in (0.3, 0.45, 0.7):
            assert reg_inc_beta(0.5, alpha, alpha) == pytest.approx(0.5, abs=1e-12)

    def test_exact_endpoints(self):
        assert reg_inc_beta(0.0, 0.4, 0.3) == 0.0
        assert reg_inc_beta(1.0, 0.4, 0.3) == 1.0

    def test_against_quadrature_oracle_spot(self):
        val = reg_inc_beta(0.25, 0.4, 0.3)
        assert abs(val - quadrature_oracle(0.25, 0.4, 0.3)) < 1e-8

    def test_against_quadrature_oracle_grid(self):
        for alpha in (0.2, 0.45, 0.7):
            for beta in (0.2, 0.45, 0.7):
                for x in np.arange(0.05, 1.0, 0.05):
                    got = reg_inc_beta(float(x), alpha, beta)
                    want = quadrature_oracle(float(x), alpha, beta)
                    assert abs(got - want) < 1e-8

    def test_monotone_in_x(self):
        for alpha, beta in [(0.2, 0.2), (0.45, 0.7), (0.7, 0.3), (0.95, 0.95)]:
            xs = np.arange(0.0, 1.0001, 1e-3)
            vals = [reg_inc_beta(float(x), alpha, beta) for x in xs]
            assert all(b >= a - 1e-14 for a, b in zip(vals, vals[1:]))

    def test_symmetry_identity(self):
        for alpha, beta in [(0.2, 0.7), (0.45, 0.3), (0.6, 0.6)]:
            for x in np.arange(0.01, 1.0, 0.01):
                lhs = reg_inc_beta(float(x), alpha, beta)
                rhs = 1.0 - reg_inc_beta(float(1.0 - x), beta, alpha)
                assert abs(lhs - rhs) < 1e-10

    @pytest.mark.parametrize("alpha,beta,x", [(0.0, 0.5, 0.5), (0.5, -1.0, 0.5), (0.5, 0.5, 1.5)])
    def test_domain_errors(self, alpha, beta, x):
        with pytest.raises(ValueError):
            reg_inc_beta(x, alpha, beta)


class TestBetaCcdf:
    def test_endpoints(self):
        assert beta_ccdf(0.0, 0.4, 0.3) == 1.0
        assert beta_ccdf(1.0, 0.4, 0.3) == 0.0

    def test_uniform_complement(self):
        for x in (0.0, 0.3, 0.8, 1.0):
            assert beta_ccdf(x, 1.0, 1.0) == pytest.approx(1.0 - x, abs=1e-12)

    def test_complement_of_quadrature(self):
        want = 1.0 - quadrature_oracle(0.5, 0.4, 0.3)
        assert abs(beta_ccdf(0.5, 0.4, 0.3) - want) < 1e-8


class TestLcTransform:
    def test_reported_value_at_zero(self):
        # a + b is forced analytically at x = 0
        assert lc_transform(0.0, LcParams(0.38, 0.55, 0.45, 0.3)) == pytest.approx(0.93)

    def test_reported_value_at_one(self):
        assert lc_transform(1.0, LcParams(0.6, 0.05, 0.4, 0.35)) == pytest.approx(0.05)

    def test_degenerate_a_zero(self):
        p = LcParams(0.0, 0.42, 0.5, 0.5)
        for x in (0.0, 0.37, 1.0):
            assert lc_transform(x, p) == pytest.approx(0.42)

    def test_range_and_monotonicity(self):
        p = LcParams(0.38, 0.55, 0.45, 0.3)
        xs = np.arange(0.0, 1.0001, 0.01)
        vals = [lc_transform(float(x), p) for x in xs]
        assert all(p.b - 1e-12 <= v <= p.a + p.b + 1e-12 for v in vals)
        assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))

    def test_segment_shape_smaller_alpha_bigger_initial_drop(self):
        # restatement of the shape observations: smaller alpha drops C_x
        # harder near 0, smaller beta drops harder near 1
        assert reg_inc_beta(0.01, 0.2, 0.3) > reg_inc_beta(0.01, 0.6, 0.3)
        assert reg_inc_beta(0.99, 0.3, 0.2) < reg_inc_beta(0.99, 0.3, 0.6)


class TestFitLc:
    def test_noiseless_recovery(self):
        for a, b, alpha, beta in PAPER_PARAM_SETS:
            result = fit_lc(sampled_curve(LcParams(a, b, alpha, beta)))
            assert isinstance(result, FitResult)
            got = result.params
            assert abs(got.alpha - alpha) <= 0.02
            assert abs(got.beta - beta) <= 0.02
            assert abs(got.a - a) <= 0.005
            assert abs(got.b - b) <= 0.005

    def test_noisy_recovery(self):
        # seed fixed: with a = 0.1 the curve spans only 0.1 in y, so sigma
        # 0.005 makes alpha borderline-identifiable and the recovery bound
        # holds for most but not all noise realizations
        for a, b, alpha, beta in PAPER_PARAM_SETS:
            samples = noisy_samples(LcParams(a, b, alpha, beta), sigma=0.005, seed=0)
            got = fit_lc(samples).params
            assert abs(got.alpha - alpha) <= 0.05
            assert abs(got.beta - beta) <= 0.05
            assert abs(got.a - a) <= 0.02
            assert abs(got.b - b) <= 0.02

    def test_constant_curve_degenerates_to_b(self):
        xs = np.arange(1, 101) / 100.0
        curve = CsdCurve(
            xs=xs, ys=np.full(100, 0.37), k=2, n=10, mode="exact", sample_count=100
        )
        got = fit_lc(curve).params
        assert got.a == pytest.approx(0.0, abs=1e-6)
        assert got.b == pytest.approx(0.37, abs=1e-6)

    def test_needs_ten_points(self):
        xs = np.arange(1, 6) / 5.0
        curve = CsdCurve(xs=xs, ys=np.full(5, 0.5), k=1, n=5, mode="exact", sample_count=5)
        with pytest.raises(ValueError, match="10"):
            fit_lc(curve)
