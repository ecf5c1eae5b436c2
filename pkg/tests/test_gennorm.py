"""Generalized normal: density, tails, fitting, KS, decision rule."""

import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from poa import kernels
from poa.errors import DegenerateSample, DomainError, ShapeMismatch
from poa.gennorm import (
    GenNormParams,
    fit_gennorm,
    gammainc_upper,
    gennorm_cdf,
    gennorm_logpdf,
    gennorm_quantile,
    ks_distance,
    log_gammainc_upper,
    required_samples,
    similarity,
    tail_log2,
    tail_prob,
    ump_decision,
)

SEED = bytes(range(32))


class TestSimilarity:
    def test_self_similarity_is_mean_square(self):
        x = kernels.gaussians(SEED, 16384, 0)
        assert abs(similarity(x, x) - 1.0) < 0.05

    def test_zero_vector(self):
        x = kernels.gaussians(SEED, 128, 0)
        assert similarity(x, np.zeros(128)) == 0.0

    def test_independent_vectors_concentrate(self):
        # |T| <= 5/sqrt(d) holds overwhelmingly; check 100 deterministic draws
        d = 16384
        x = kernels.gaussians(SEED, d, 0)
        bound = 5.0 / math.sqrt(d)
        for j in range(1, 101):
            y = kernels.gaussians(SEED, d, j)
            assert abs(similarity(x, y)) <= bound

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            similarity(np.ones(4), np.ones(5))


class TestRequiredSamples:
    def test_formula_values(self):
        # ceil(ln^2(1/alpha) ln(1/delta)); magnitudes match the reported
        # ~2^8 / ~2^12 / ~2^13 sample counts
        assert required_samples(2.0 ** -10, 1e-3) == 332
        assert required_samples(2.0 ** -30, 1e-3) == 2987
        assert required_samples(2.0 ** -50, 1e-3) == 8298
        for alpha, mag in ((2.0 ** -10, 8), (2.0 ** -30, 12), (2.0 ** -50, 13)):
            assert round(math.log2(required_samples(alpha, 1e-3))) == mag

    def test_domain(self):
        for bad in (0.0, 1.0, -0.1, 2.0):
            with pytest.raises(DomainError):
                required_samples(bad, 1e-3)
            with pytest.raises(DomainError):
                required_samples(0.5, bad)


class TestDensityAndCdf:
    def test_gaussian_reduction(self):
        # beta=2, gamma=sqrt(2) is the standard normal
        p = GenNormParams(mu=0.5, gamma=math.sqrt(2.0), beta=2.0)
        xs = np.linspace(-3, 4, 31)
        assert np.allclose(gennorm_logpdf(p, xs), stats.norm.logpdf(xs, loc=0.5), atol=1e-12)
        assert np.allclose(gennorm_cdf(p, xs), stats.norm.cdf(xs, loc=0.5), atol=1e-12)
        assert gennorm_cdf(p, 0.5) == pytest.approx(0.5, abs=1e-15)

    def test_laplace_tail_closed_form(self):
        p = GenNormParams(mu=0.0, gamma=1.0, beta=1.0)
        # P[X >= mu + ln 2] = exp(-ln 2)/2 = 1/4
        assert tail_prob(p, math.log(2.0)) == pytest.approx(0.25, rel=1e-12)

    def test_cdf_against_quadrature(self):
        p = GenNormParams(mu=0.0, gamma=2.0, beta=1.5)
        val, err = integrate.quad(
            lambda t: math.exp(gennorm_logpdf(p, t)),
            -60.0, 3.0, points=[0.0], limit=400, epsabs=1e-13,
        )
        assert err < 1e-7  # scipy's estimate is conservative
        assert gennorm_cdf(p, 3.0) == pytest.approx(val, abs=1e-10)

    def test_gammainc_against_mpmath(self):
        for a in (0.1, 0.5, 1.0, 2.0, 3.3):
            for x in (0.01, 0.5, 1.0, 3.0, 10.0, 50.0, 200.0):
                want = float(mpmath.gammainc(a, x, regularized=True))
                got = float(gammainc_upper(a, x))
                assert got == pytest.approx(want, rel=1e-12, abs=1e-300)
                if want > 0:
                    assert log_gammainc_upper(a, x) == pytest.approx(
                        float(mpmath.log(mpmath.gammainc(a, x, regularized=True))), rel=1e-10
                    )


class TestTail:
    def test_half_at_location(self):
        p = GenNormParams(mu=0.7, gamma=0.3, beta=1.7)
        assert tail_prob(p, 0.7) == pytest.approx(0.5, abs=1e-15)
        assert tail_log2(p, 0.7) == pytest.approx(-1.0, abs=1e-12)

    def test_six_sigma_matches_erfc(self):
        p = GenNormParams(mu=0.0, gamma=math.sqrt(2.0), beta=2.0)
        want = 0.5 * math.erfc(6.0 / math.sqrt(2.0))  # 9.866e-10
        assert tail_prob(p, 6.0) == pytest.approx(want, rel=1e-3)

    def test_infinite_threshold(self):
        p = GenNormParams(mu=0.0, gamma=1.0, beta=2.0)
        assert tail_prob(p, math.inf) == 0.0
        assert tail_log2(p, math.inf) == -math.inf

    def test_log_domain_deep_tail_monotone(self):
        p = GenNormParams(mu=0.0, gamma=1.0, beta=1.2)
        target = gennorm_quantile(p, 2.0 ** -200)
        assert math.isfinite(target)
        assert tail_log2(p, target) == pytest.approx(-200.0, abs=1e-6)
        vals = [tail_log2(p, t) for t in np.linspace(0.0, target, 50)]
        assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))

    @settings(max_examples=50, deadline=None)
    @given(
        t1=st.floats(-50, 50),
        t2=st.floats(-50, 50),
        beta=st.floats(0.4, 6.0),
        gamma=st.floats(0.1, 10.0),
    )
    def test_monotone_nonincreasing(self, t1, t2, beta, gamma):
        p = GenNormParams(mu=0.0, gamma=gamma, beta=beta)
        lo, hi = min(t1, t2), max(t1, t2)
        assert tail_prob(p, hi) <= tail_prob(p, lo) + 1e-15

    def test_quantile_roundtrip(self):
        p = GenNormParams(mu=1.0, gamma=0.5, beta=2.4)
        for prob in (0.4, 0.1, 1e-3, 2.0 ** -30):
            x = gennorm_quantile(p, prob)
            assert tail_prob(p, x) == pytest.approx(prob, rel=1e-9)


class TestFit:
    def _inverse_cdf_samples(self, beta, gamma, mu, n, tag):
        u = kernels.uniforms(hash_seed(tag), n, 0)
        return mu + gamma * stats.gennorm.ppf(u, beta)

    def test_recovers_gaussian_family(self):
        xs = self._inverse_cdf_samples(2.0, 1.0, 0.0, 8192, b"fit-normal")
        p = fit_gennorm(xs)
        assert abs(p.mu) < 0.05
        assert abs(p.gamma - 1.0) < 0.05
        assert abs(p.beta - 2.0) < 0.3

    def test_recovers_laplace_shape(self):
        xs = self._inverse_cdf_samples(1.0, 1.0, 0.0, 8192, b"fit-laplace")
        p = fit_gennorm(xs)
        assert 0.85 <= p.beta <= 1.15

    def test_loglik_at_truth_not_better(self):
        # the fit's likelihood should match or beat the generating truth
        xs = self._inverse_cdf_samples(2.0, 1.0, 0.0, 2048, b"fit-ll")
        fitted = fit_gennorm(xs)

        def loglik(p):
            return float(np.sum(gennorm_logpdf(p, xs)))

        assert loglik(fitted) >= loglik(GenNormParams(0.0, 1.0, 2.0)) - 1e-6

    def test_degenerate(self):
        with pytest.raises(DegenerateSample):
            fit_gennorm(np.ones(32))

    def test_too_few(self):
        with pytest.raises(DomainError):
            fit_gennorm(np.arange(5.0))

    def test_order_invariant(self):
        xs = self._inverse_cdf_samples(2.0, 1.0, 0.3, 512, b"fit-order")
        a = fit_gennorm(xs)
        b = fit_gennorm(xs[::-1].copy())
        assert a == b


class TestKs:
    def test_exact_parameters_small_distance(self):
        p = GenNormParams(mu=0.0, gamma=1.0, beta=2.0)
        u = kernels.uniforms(hash_seed(b"ks-samples"), 8192, 0)
        xs = stats.gennorm.ppf(u, 2.0)
        # 99% critical value ~ 1.63 / sqrt(n) = 0.018
        assert ks_distance(xs, p) <= 0.02

    def test_single_sample_at_median(self):
        p = GenNormParams(mu=0.0, gamma=1.0, beta=2.0)
        assert ks_distance([0.0], p) == pytest.approx(0.5, abs=1e-12)

    def test_matches_scipy_kstest(self):
        p = GenNormParams(mu=0.1, gamma=0.8, beta=1.6)
        xs = np.linspace(-2, 2, 101)
        want = stats.kstest(xs, lambda v: stats.gennorm.cdf(v, 1.6, loc=0.1, scale=0.8)).statistic
        assert ks_distance(xs, p) == pytest.approx(want, abs=1e-9)


class TestUmp:
    def test_negative_score_clamped(self):
        assert not ump_decision(-0.5, 0.1)

    def test_boundary_closed(self):
        assert ump_decision(0.1, 0.1)

    def test_binomial_calibration(self):
        # rejection rate under H0 within 3 binomial stderr of the level
        p = GenNormParams(mu=0.0, gamma=1.0, beta=2.0)
        level = 0.05
        thresh = gennorm_quantile(p, level)
        u = kernels.uniforms(hash_seed(b"ump-cal"), 10000, 0)
        draws = stats.gennorm.ppf(u, 2.0)
        rate = float(np.mean([ump_decision(s, thresh) for s in draws]))
        stderr = math.sqrt(level * (1 - level) / 10000)
        assert abs(rate - level) <= 3 * stderr


def hash_seed(tag: bytes) -> bytes:
    import hashlib

    return hashlib.sha3_256(b"gennorm-test:" + tag).digest()
