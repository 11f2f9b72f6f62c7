"""Functionals, difference checks, domain probes, mode classification."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ommap import (BesovMeasure, ClassifyOpts, GaussianMeasure, InputError,
                   LiminfOnlyMeasure, OmFunctional, OmNotStrongMeasure, ProbeOpts,
                   RatioOpts, SpectralOperator, WeightedSeqSpace, besov_om,
                   classify_mode, density_om, gaussian_om, m_property_probe,
                   om_difference_check, posterior_om, radius_schedule)
from ommap.counterexamples import _spike_density1d


def std_gaussian(k):
    return GaussianMeasure(np.zeros(k), SpectralOperator(np.ones(k)))


class TestGaussianFunctional:
    def test_anchor_is_zero_and_unique_minimum(self):
        mu = GaussianMeasure(np.array([0.5, -1.0]), SpectralOperator(np.array([2.0, 1.0])))
        fn = gaussian_om(mu)
        assert fn(mu.mean) == 0.0
        rng = np.random.default_rng(0)
        for _ in range(50):
            u = mu.mean + rng.normal(size=2)
            assert fn(u) > 0.0

    def test_halved_squared_preimage(self):
        mu = GaussianMeasure(np.zeros(2), SpectralOperator(np.array([4.0, 1.0])))
        assert gaussian_om(mu)(np.array([2.0, 0.0])) == pytest.approx(0.5, abs=1e-15)

    def test_off_range_is_infinite(self):
        mu = GaussianMeasure(np.zeros(2), SpectralOperator(np.array([4.0, 0.0])))
        fn = gaussian_om(mu)
        assert fn(np.array([0.0, 1.0])) == math.inf
        assert not fn.domain_test(np.array([0.0, 1.0]))

    @given(st.floats(min_value=-4, max_value=4, allow_nan=False),
           st.integers(min_value=0, max_value=2 ** 32 - 1))
    @settings(max_examples=40, deadline=None)
    def test_two_homogeneous_about_mean(self, c, seed):
        rng = np.random.default_rng(seed)
        mu = GaussianMeasure(rng.normal(size=3),
                             SpectralOperator(rng.uniform(0.5, 2.0, 3)))
        fn = gaussian_om(mu)
        h = rng.normal(size=3)
        lhs = fn(mu.mean + c * h)
        rhs = c * c * fn(mu.mean + h)
        assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-12)


class TestBesovFunctional:
    def test_values(self):
        mu = BesovMeasure(1.0, 1, 1.0, 4)
        fn = besov_om(mu)
        assert fn(np.zeros(4)) == 0.0
        assert fn(np.array([1.0, 0, 0, 0])) == 1.0
        assert fn(np.array([1.0, 1.0, 0, 0])) == pytest.approx(1 + math.sqrt(2), abs=1e-14)

    @given(st.floats(min_value=-3, max_value=3, allow_nan=False),
           st.integers(min_value=0, max_value=2 ** 32 - 1))
    @settings(max_examples=40, deadline=None)
    def test_one_homogeneous(self, c, seed):
        rng = np.random.default_rng(seed)
        mu = BesovMeasure(1.0, 1, 1.0, 5)
        fn = besov_om(mu)
        u = rng.normal(size=5)
        assert fn(c * u) == pytest.approx(abs(c) * fn(u), rel=1e-12, abs=1e-12)

    def test_tail_bound_dominates_explicit_sums(self):
        mu = BesovMeasure(1.0, 1, 1.0, 50)
        bound = fn_bound = besov_om(mu).meta["tail_bound"](2.0, 3.0)
        # compare with the finite continuation sum over the next 10^5 terms
        k = np.arange(51, 100_000, dtype=float)
        partial = np.sum(2.0 * k ** -3.0 * k ** 0.5)
        assert partial <= bound
        assert math.isinf(besov_om(mu).meta["tail_bound"](1.0, 0.2))
        del fn_bound


class TestPosteriorFunctional:
    def test_zero_potential_is_identity(self):
        mu = std_gaussian(2)
        prior = gaussian_om(mu)
        post = posterior_om(prior, lambda u: 0.0)
        rng = np.random.default_rng(1)
        for _ in range(20):
            u = rng.normal(size=2)
            assert post(u) == prior(u)

    def test_scalar_posterior_minimiser(self):
        prior = gaussian_om(std_gaussian(1))
        post = posterior_om(prior, lambda u: 0.5 * (2.0 - u[0]) ** 2)
        xs = np.linspace(-1, 3, 4001)
        best = xs[np.argmin([post(np.array([x])) for x in xs])]
        assert best == pytest.approx(1.0, abs=1e-3)

    def test_constant_shift(self):
        prior = gaussian_om(std_gaussian(1))
        post = posterior_om(prior, lambda u: 7.0)
        assert post(np.array([0.3])) == pytest.approx(prior(np.array([0.3])) + 7.0)

    @given(st.integers(min_value=0, max_value=2 ** 32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_difference_identity(self, seed):
        rng = np.random.default_rng(seed)
        prior = gaussian_om(std_gaussian(3))
        phi = lambda u: float(np.sin(u[0]) + u[1] ** 2)
        post = posterior_om(prior, phi)
        x1, x2 = rng.normal(size=(2, 3))
        lhs = (post(x1) - post(x2)) - (prior(x1) - prior(x2))
        assert lhs == pytest.approx(phi(x1) - phi(x2), abs=1e-12)


class TestOmDifferenceCheck:
    def test_same_point(self):
        mu = std_gaussian(1)
        rep = om_difference_check(mu, gaussian_om(mu), np.zeros(1), np.zeros(1),
                                  radius_schedule(0.5, 8))
        assert rep.verdict == "pass"
        assert rep.expected == 1.0

    def test_1d_gaussian(self):
        mu = std_gaussian(1)
        rep = om_difference_check(mu, gaussian_om(mu), np.array([1.0]), np.array([0.0]),
                                  radius_schedule(0.5, 10),
                                  opts=ProbeOpts(abs_tol=1e-3))
        assert rep.expected == pytest.approx(math.exp(-0.5))
        assert rep.verdict == "pass"

    def test_gaussian_2d_monte_carlo(self):
        mu = GaussianMeasure(np.zeros(2), SpectralOperator(np.array([4.0, 1.0])))
        sp = WeightedSeqSpace.unweighted(2.0, 2)
        rep = om_difference_check(
            mu, gaussian_om(mu), np.array([2.0, 0.0]), np.zeros(2),
            radius_schedule(0.2, 10), sp,
            ProbeOpts(abs_tol=5e-3, ratio=RatioOpts(n_samples=40_000, seed=2)))
        assert rep.expected == pytest.approx(math.exp(-0.5))
        assert rep.verdict == "pass"

    def test_besov_k2(self):
        mu = BesovMeasure(1.0, 1, 1.0, 2)
        rep = om_difference_check(
            mu, besov_om(mu), np.array([1.0, 1.0]), np.zeros(2),
            radius_schedule(0.2, 10), None,
            ProbeOpts(abs_tol=5e-3, ratio=RatioOpts(n_samples=60_000, seed=3)))
        assert rep.expected == pytest.approx(math.exp(-(1 + math.sqrt(2))))
        assert rep.verdict == "pass"

    def test_integer_spike_pairs(self):
        m = OmNotStrongMeasure()
        fn = m.om_functional()
        for k in (2, 3):
            rep = om_difference_check(
                m, fn, np.array([1.0]), np.array([float(k)]),
                radius_schedule(1e-8, 8, factor=4.0), None,
                ProbeOpts(abs_tol=1e-2, ratio=RatioOpts(fit_in="sqrt_r")))
            assert rep.expected == pytest.approx(float(k * k))
            assert rep.verdict == "pass"

    def test_requires_domain_points(self):
        mu = GaussianMeasure(np.zeros(2), SpectralOperator(np.array([1.0, 0.0])))
        with pytest.raises(InputError):
            om_difference_check(mu, gaussian_om(mu), np.array([0.0, 1.0]), np.zeros(2),
                                radius_schedule(0.5, 5))


class TestMPropertyProbe:
    def test_gaussian_point_mass_direction(self):
        mu = GaussianMeasure(np.zeros(2), SpectralOperator(np.array([1.0, 0.0])))
        rep = m_property_probe(mu, gaussian_om(mu), [np.array([0.0, 1.0])],
                               radius_schedule(0.4, 8),
                               WeightedSeqSpace.unweighted(2.0, 2),
                               ProbeOpts(ratio=RatioOpts(n_samples=5_000, seed=4)))
        entry = rep.entries[0]
        assert entry.min_ratio == 0.0
        assert entry.verdict == "pass"

    def test_oscillating_measure_along_special_radii(self):
        m = LiminfOnlyMeasure(depth=40)
        fn = OmFunctional(eval=lambda u: 0.0 if abs(float(np.asarray(u).reshape(())) - 1.0) < 1e-12 else math.inf,
                          domain_test=lambda u: abs(float(np.asarray(u).reshape(())) - 1.0) < 1e-12,
                          anchor=np.array([1.0]))
        radii = np.array([m.delta_radius(n) for n in range(1, 13)])
        rep = m_property_probe(m, fn, [np.array([-1.0])], radii)
        entry = rep.entries[0]
        np.testing.assert_allclose(
            entry.ratios, [math.ldexp(1.0, -(n + 2)) for n in range(1, 13)], rtol=1e-12)
        assert entry.verdict == "pass"

    def test_singular_spike_interior_point(self):
        m = OmNotStrongMeasure()
        fn = m.om_functional()
        radii = radius_schedule(1e-4, 8, factor=4.0)
        rep = m_property_probe(m, fn, [np.array([2.1])], radii)
        assert rep.entries[0].verdict == "pass"

    def test_rejects_domain_points(self):
        mu = std_gaussian(1)
        with pytest.raises(InputError):
            m_property_probe(mu, gaussian_om(mu), [np.zeros(1)], radius_schedule(0.5, 4))


class TestClassifyMode:
    def test_standard_gaussian_mean_is_strong_and_weak(self):
        mu = std_gaussian(1)
        comp = [np.array([x]) for x in (-1.0, -0.3, 0.4, 1.2)]
        res = classify_mode(mu, np.zeros(1), comp, radius_schedule(0.5, 8))
        assert res.strong == "yes"
        assert res.global_weak == "yes"
        assert res.weak_worst_ratio <= 1.0 + 1e-9

    def test_oscillation_breaks_weak_mode(self):
        m = LiminfOnlyMeasure(depth=40)
        radii = np.array([m.eps_radius(n) for n in range(1, 13)])
        res = classify_mode(m, np.array([1.0]), [np.array([-1.0])], radii,
                            None, ClassifyOpts(refine=False))
        assert res.global_weak == "no"
        assert res.weak_worst_ratio == pytest.approx(2.0, rel=1e-12)

    def test_strong_yes_implies_weak_yes(self):
        mu = std_gaussian(1)
        res = classify_mode(mu, np.zeros(1), [np.array([0.5])], radius_schedule(0.5, 8))
        if res.strong == "yes":
            assert res.global_weak == "yes"

    def test_mode_minimiser_correspondence_gaussian(self):
        # the argmin of the functional (the mean) is the classified mode
        # over a dense competitor grid
        mu = GaussianMeasure(np.array([0.7]), SpectralOperator(np.array([1.5])))
        fn = gaussian_om(mu)
        grid = [np.array([x]) for x in np.linspace(-2, 3, 41)]
        res = classify_mode(mu, np.array([0.7]), grid, radius_schedule(0.25, 8))
        assert res.global_weak == "yes"
        vals = [fn(g) for g in grid]
        assert fn(np.array([0.7])) <= min(vals) + 1e-12

    def test_mode_minimiser_correspondence_besov(self):
        mu = BesovMeasure(1.0, 1, 1.0, 1)
        fn = besov_om(mu)
        grid = [np.array([x]) for x in np.linspace(-1.5, 1.5, 31)]
        res = classify_mode(mu, np.zeros(1), grid, radius_schedule(0.25, 8))
        assert res.global_weak == "yes"
        assert fn(np.zeros(1)) <= min(fn(g) for g in grid) + 1e-12


class TestDensityFunctional:
    def test_matches_negative_log_density(self):
        d = _spike_density1d(5)
        fn = density_om(d, anchor=0.2)
        x = 0.7
        assert fn(np.array([x])) == pytest.approx(-math.log(d.pdf(x)))
        assert fn(np.array([-30.0])) > 100 or math.isinf(fn(np.array([-30.0])))
