import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from chartbank import (
    FiniteSet,
    GaussianMeanShift,
    GaussianVarianceShift,
    GenericFamily,
    GeometricPrior,
    Interval,
    sample_path,
    sample_path_multi,
)
from conftest import gaussian_logpdf, quadrature_kl


class TestParamSets:
    def test_interval_contains_endpoints(self):
        iv = Interval(0.4, 2.8)
        assert iv.contains(0.4) and iv.contains(2.8) and iv.contains(1.0)
        assert not iv.contains(0.39999) and not iv.contains(2.80001)

    def test_interval_rejects_degenerate(self):
        with pytest.raises(ValueError):
            Interval(1.0, 1.0)
        with pytest.raises(ValueError):
            Interval(2.0, 1.0)
        with pytest.raises(ValueError):
            Interval(0.0, math.inf)

    def test_finite_set_membership(self):
        fs = FiniteSet((0.4, 1.6, 2.8))
        assert fs.contains(1.6)
        assert not fs.contains(1.0)

    def test_finite_set_requires_increasing(self):
        with pytest.raises(ValueError):
            FiniteSet((1.0, 1.0))
        with pytest.raises(ValueError):
            FiniteSet((2.0, 1.0))
        with pytest.raises(ValueError):
            FiniteSet(())


class TestGeometricPrior:
    def test_rho_validation(self):
        for bad in (0.0, 1.0, -0.1, 1.5, math.nan):
            with pytest.raises(ValueError):
                GeometricPrior(bad)

    def test_slot_cost_and_mean(self):
        prior = GeometricPrior(0.01)
        assert prior.slot_cost == pytest.approx(0.010050335853501442, abs=0, rel=1e-15)
        assert prior.mean == pytest.approx(100.0)

    def test_cdf_frozen_value(self):
        # P(t <= 10) = 1 - 0.99^10, evaluated independently with expm1
        assert GeometricPrior(0.01).cdf(10) == pytest.approx(
            0.09561792499119552, abs=0, rel=1e-15
        )

    def test_cdf_edges(self):
        prior = GeometricPrior(0.25)
        assert prior.cdf(0) == 0.0
        assert prior.cdf(1) == pytest.approx(0.25)

    @given(st.floats(min_value=1e-4, max_value=0.999), st.integers(1, 300))
    def test_cdf_matches_direct_sum(self, rho, n):
        direct = sum(rho * (1 - rho) ** (k - 1) for k in range(1, n + 1))
        assert GeometricPrior(rho).cdf(n) == pytest.approx(direct, rel=1e-9)

    def test_sample_matches_scipy_inverse_cdf(self):
        # the inverse-CDF formula against scipy's ppf on a grid of uniforms
        prior = GeometricPrior(0.07)
        us = np.linspace(1e-6, 1 - 1e-6, 5001)
        ours = np.floor(np.log1p(-us) / math.log1p(-prior.rho)) + 1.0
        ref = stats.geom.ppf(us, prior.rho)
        # ppf uses ceil(log(1-u)/log(1-rho)); the two agree except exactly on
        # atoms, which the continuous uniform grid avoids
        assert np.array_equal(ours, ref)

    def test_sample_empirical_mean(self):
        prior = GeometricPrior(0.05)
        draws = prior.sample_many(np.random.default_rng(11), 20_000)
        se = draws.std(ddof=1) / math.sqrt(draws.size)
        assert abs(draws.mean() - 20.0) < 5 * se
        assert draws.min() >= 1
        assert draws.dtype == np.int64

    def test_sample_deterministic(self):
        prior = GeometricPrior(0.3)
        assert prior.sample(np.random.default_rng(5)) == prior.sample(
            np.random.default_rng(5)
        )
        a = prior.sample_many(np.random.default_rng(9), 50)
        b = prior.sample_many(np.random.default_rng(9), 50)
        assert np.array_equal(a, b)


class TestGaussianMeanShift:
    def setup_method(self):
        self.family = GaussianMeanShift(
            pre_mean=0.0, sigma=1.0, post_params=Interval(0.2, 3.0)
        )

    def test_llr_vs_logpdf_difference(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            x = float(rng.normal(0, 2))
            lam = float(rng.uniform(0.2, 3.0))
            expected = gaussian_logpdf(x, lam, 1.0) - gaussian_logpdf(x, 0.0, 1.0)
            assert self.family.llr(lam, x) == pytest.approx(expected, abs=1e-12)

    def test_llr_vectorized(self):
        xs = np.array([-1.0, 0.0, 2.5])
        out = self.family.llr(1.0, xs)
        assert out.shape == (3,)
        for x, o in zip(xs, out):
            assert o == pytest.approx(self.family.llr(1.0, float(x)))

    def test_llr_rejects_inadmissible(self):
        with pytest.raises(ValueError):
            self.family.llr(5.0, 0.0)

    def test_kl_closed_forms_vs_quadrature(self):
        got = self.family.kl_post_vs_pre(1.3)
        ref = quadrature_kl(
            lambda x: gaussian_logpdf(x, 1.3, 1.0),
            lambda x: gaussian_logpdf(x, 0.0, 1.0),
            -12,
            14,
        )
        assert got == pytest.approx(ref, rel=1e-9)
        got2 = self.family.kl_post_vs_post(0.6, 2.4)
        ref2 = quadrature_kl(
            lambda x: gaussian_logpdf(x, 0.6, 1.0),
            lambda x: gaussian_logpdf(x, 2.4, 1.0),
            -12,
            14,
        )
        assert got2 == pytest.approx(ref2, rel=1e-9)

    def test_scaled_family_kl(self):
        fam = GaussianMeanShift(pre_mean=1.0, sigma=2.0, post_params=Interval(1.5, 6.0))
        assert fam.kl_post_vs_pre(3.0) == pytest.approx((3.0 - 1.0) ** 2 / 8.0)

    def test_paired_sampling_is_shifted_noise(self):
        assert self.family.supports_paired_sampling
        z = np.array([-0.7, 0.0, 1.9])
        pre = self.family.pre_from_std(z)
        post = self.family.post_from_std(2.0, z)
        assert np.array_equal(post, pre + 2.0)

    def test_sigma_validation(self):
        with pytest.raises(ValueError):
            GaussianMeanShift(pre_mean=0.0, sigma=0.0, post_params=Interval(1, 2))


class TestGaussianVarianceShift:
    def setup_method(self):
        self.family = GaussianVarianceShift(pre_sigma=1.0, post_params=Interval(1.1, 3.0))

    def test_llr_frozen_at_origin(self):
        # at x = 0 only the normalization ratio survives
        assert self.family.llr(2.0, 0.0) == pytest.approx(
            -0.6931471805599453, abs=0, rel=1e-15
        )

    def test_llr_vs_logpdf_difference(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            x = float(rng.normal(0, 2))
            lam = float(rng.uniform(1.1, 3.0))
            expected = gaussian_logpdf(x, 0.0, lam) - gaussian_logpdf(x, 0.0, 1.0)
            assert self.family.llr(lam, x) == pytest.approx(expected, abs=1e-12)

    def test_kl_frozen_and_quadrature(self):
        got = self.family.kl_post_vs_pre(2.0)
        assert got == pytest.approx(0.8068528194400547, abs=0, rel=1e-12)
        ref = quadrature_kl(
            lambda x: gaussian_logpdf(x, 0.0, 2.0),
            lambda x: gaussian_logpdf(x, 0.0, 1.0),
            -24,
            24,
        )
        assert got == pytest.approx(ref, rel=1e-9)

    def test_kl_post_vs_post_quadrature(self):
        got = self.family.kl_post_vs_post(1.4, 2.6)
        ref = quadrature_kl(
            lambda x: gaussian_logpdf(x, 0.0, 1.4),
            lambda x: gaussian_logpdf(x, 0.0, 2.6),
            -20,
            20,
        )
        assert got == pytest.approx(ref, rel=1e-9)

    def test_centered_family(self):
        fam = GaussianVarianceShift(
            pre_sigma=1.0, post_params=Interval(1.1, 3.0), center=5.0
        )
        # shifting x and the center together leaves the ratio unchanged
        assert fam.llr(2.0, 5.7) == pytest.approx(self.family.llr(2.0, 0.7))

    def test_scale_validation(self):
        with pytest.raises(ValueError):
            GaussianVarianceShift(pre_sigma=-1.0, post_params=Interval(1.1, 3.0))

    def test_paired_sampling_scales_noise(self):
        z = np.array([-0.7, 0.0, 1.9])
        pre = self.family.pre_from_std(z)
        post = self.family.post_from_std(2.5, z)
        assert np.allclose(post, pre * 2.5)


class TestGenericFamily:
    def _normal_generic(self):
        return GenericFamily(
            post_params=Interval(0.2, 3.0),
            log_pre=lambda x: gaussian_logpdf(x, 0.0, 1.0),
            log_post=lambda lam, x: gaussian_logpdf(x, lam, 1.0),
            pre_sampler=lambda rng, size: rng.normal(0.0, 1.0, size),
            post_sampler=lambda lam, rng, size: rng.normal(lam, 1.0, size),
            kl_mc_samples=60_000,
        )

    def test_llr_matches_closed_form_family(self):
        generic = self._normal_generic()
        closed = GaussianMeanShift(pre_mean=0.0, sigma=1.0, post_params=Interval(0.2, 3.0))
        rng = np.random.default_rng(2)
        for _ in range(100):
            x = float(rng.normal(0, 2))
            lam = float(rng.uniform(0.2, 3.0))
            assert generic.llr(lam, x) == pytest.approx(closed.llr(lam, x), abs=1e-10)

    def test_kl_monte_carlo_near_truth(self):
        generic = self._normal_generic()
        value, se = generic.kl_post_vs_pre_detail(1.5)
        assert se > 0
        assert abs(value - 1.125) < 4 * se

    def test_rejects_nan_llr(self):
        bad = GenericFamily(
            post_params=Interval(0.2, 3.0),
            log_pre=lambda x: math.nan,
            log_post=lambda lam, x: 0.0,
            pre_sampler=lambda rng, size: rng.normal(0.0, 1.0, size),
            post_sampler=lambda lam, rng, size: rng.normal(lam, 1.0, size),
        )
        with pytest.raises(ValueError):
            bad.llr(1.0, 0.0)

    def test_allows_impossible_observation(self):
        # -inf log post density means x cannot occur after the change; the
        # ratio is then -inf, which the charts absorb without complaint
        fam = GenericFamily(
            post_params=Interval(0.2, 3.0),
            log_pre=lambda x: 0.0,
            log_post=lambda lam, x: -math.inf,
            pre_sampler=lambda rng, size: rng.normal(0.0, 1.0, size),
            post_sampler=lambda lam, rng, size: rng.normal(lam, 1.0, size),
        )
        assert fam.llr(1.0, 0.0) == -math.inf


class TestSamplePath:
    def setup_method(self):
        self.family = GaussianMeanShift(
            pre_mean=0.0, sigma=1.0, post_params=Interval(0.2, 3.0)
        )
        self.prior = GeometricPrior(0.05)

    def test_shapes_and_change_slot(self):
        t, x = sample_path(self.family, self.prior, 1.0, horizon=200, seed=[3, 1])
        assert x.shape == (200,)
        assert t >= 1

    def test_deterministic_in_seed(self):
        t1, x1 = sample_path(self.family, self.prior, 1.0, 100, seed=[4, 2])
        t2, x2 = sample_path(self.family, self.prior, 1.0, 100, seed=[4, 2])
        assert t1 == t2
        assert np.array_equal(x1, x2)

    def test_pre_change_segment_invariant_to_true_parameter(self):
        # the same seed must yield bitwise-identical pre-change draws no
        # matter which post-change parameter is simulated
        for run in range(20):
            ta, xa = sample_path(self.family, self.prior, 0.5, 150, seed=[7, run])
            tb, xb = sample_path(self.family, self.prior, 2.5, 150, seed=[7, run])
            assert ta == tb
            cut = min(ta - 1, 150)
            assert np.array_equal(xa[:cut], xb[:cut])
            if cut < 150:
                assert not np.array_equal(xa[cut:], xb[cut:])

    def test_post_change_mean_shifts(self):
        rng_mean = []
        for run in range(300):
            t, x = sample_path(self.family, self.prior, 2.0, 60, seed=[8, run])
            if t <= 30:
                rng_mean.append(x[t - 1 :].mean())
        assert abs(np.mean(rng_mean) - 2.0) < 0.1

    def test_multi_source_paths(self):
        fams = [
            GaussianVarianceShift(pre_sigma=1.0, post_params=Interval(1.1, 3.0))
            for _ in range(3)
        ]
        t, x = sample_path_multi(fams, self.prior, (1.5, 2.0, 2.5), 120, seed=[9, 0])
        assert x.shape == (3, 120)
        assert t >= 1
        # sources are driven by independent noise
        assert not np.array_equal(x[0], x[1])
        t2, x2 = sample_path_multi(fams, self.prior, (1.5, 2.0, 2.5), 120, seed=[9, 0])
        assert t == t2 and np.array_equal(x, x2)

    def test_multi_source_shared_change_slot(self):
        fams = [
            GaussianVarianceShift(pre_sigma=1.0, post_params=Interval(1.1, 4.0))
            for _ in range(2)
        ]
        # with a huge shift the sample variance jumps at the same slot in
        # both sources
        t, x = sample_path_multi(fams, self.prior, (3.9, 3.9), 400, seed=[10, 4])
        if t <= 360:
            post = x[:, t - 1 :]
            assert (np.abs(post) > 2.0).mean() > 0.3

    def test_rejects_wrong_arity(self):
        fams = [self.family, self.family]
        with pytest.raises(ValueError):
            sample_path_multi(fams, self.prior, (1.0,), 50, seed=0)


@settings(max_examples=30)
@given(
    rho=st.floats(min_value=0.001, max_value=0.5),
    lam=st.floats(min_value=0.2, max_value=3.0),
)
def test_prior_and_family_compose(rho, lam):
    family = GaussianMeanShift(pre_mean=0.0, sigma=1.0, post_params=Interval(0.2, 3.0))
    prior = GeometricPrior(rho)
    assert prior.slot_cost > 0
    assert family.kl_post_vs_pre(lam) > 0
    assert family.kl_post_vs_post(lam, lam) == 0.0
