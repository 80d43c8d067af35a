import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fdivclass import bottom_up
from fdivclass.bottom_up import (
    CATALOGUE,
    catalogue_consistency,
    derivative_matches_objective,
    golden_section_max,
    integrand_derivative,
    max_g_slope,
    pointwise_optimal_d,
    steepness_compare,
)
from fdivclass.divergences import NAMES, DomainError, get_spec
from fdivclass.posterior import optimal_d_from_posterior

densities = st.floats(0.05, 1.0)


class TestIntegrandDerivative:
    def test_kl_example(self):
        assert integrand_derivative(CATALOGUE["kl"], 1.0, 0.2, 0.1) == pytest.approx(0.1, abs=1e-15)

    def test_sl_example(self):
        assert integrand_derivative(CATALOGUE["sl"], 0.5, 0.1, 0.1) == pytest.approx(0.0, abs=1e-15)

    @pytest.mark.parametrize("name", list(CATALOGUE))
    @given(pj=densities, pp=densities)
    @settings(max_examples=50, deadline=None)
    def test_root_at_optimum(self, name, pj, pp):
        b = CATALOGUE[name]
        d = b.k(pj / pp)
        assert integrand_derivative(b, d, pj, pp) == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("name", list(CATALOGUE))
    def test_sign_change_around_root(self, name):
        b = CATALOGUE[name]
        d = b.k(0.3 / 0.2)
        assert integrand_derivative(b, 0.9 * d, 0.3, 0.2) > 0
        assert integrand_derivative(b, 1.05 * d, 0.3, 0.2) < 0

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            integrand_derivative(CATALOGUE["gan"], 1.2, 0.1, 0.1)
        with pytest.raises(DomainError):
            integrand_derivative(CATALOGUE["kl"], 1.0, 0.0, 0.1)
        with pytest.raises(DomainError):
            integrand_derivative(CATALOGUE["kl"], -1.0, 0.1, 0.1)

    @pytest.mark.parametrize("name,alpha,beta", [("kl", 1, 0), ("rkl", 1, 0), ("hd", 1.5, 0), ("gan", 1, 1), ("p", 0, 0), ("sl", 1, 0)])
    def test_exponents(self, name, alpha, beta):
        assert (CATALOGUE[name].alpha, CATALOGUE[name].beta) == (alpha, beta)

    def test_sl_shares_gan_map(self):
        for p in (0.1, 1.0, 7.0):
            assert CATALOGUE["sl"].k(p) == CATALOGUE["gan"].k(p)


class TestCatalogueConsistency:
    @pytest.mark.parametrize("name", list(CATALOGUE))
    def test_derivative_matching(self, name):
        rng = np.random.default_rng(11)
        for pj, pp in rng.uniform(0.05, 1.0, size=(5, 2)):
            assert derivative_matches_objective(name, pj, pp, n_points=100) < 1e-8

    @pytest.mark.parametrize("name", list(CATALOGUE))
    def test_quadrature_recovers_objective(self, name):
        assert catalogue_consistency(name, 0.3, 0.7, n_points=30) < 1e-8

    @pytest.mark.parametrize("name,scale", [("hd", 2.0), ("p", 0.5), ("kl", 1.0), ("sl", 1.0)])
    def test_scale(self, name, scale):
        assert CATALOGUE[name].scale == scale


class TestMonotonicity:
    @pytest.mark.parametrize("name", list(CATALOGUE))
    def test_non_increasing_on_concave_range(self, name):
        rng = np.random.default_rng(5)
        for pj, pp in rng.uniform(0.05, 1.0, size=(10, 2)):
            assert max_g_slope(name, pj, pp) <= 1e-8

    def test_hd_not_monotone_beyond_concave_range(self):
        # beyond D = 3 p_prod / p_joint the HD slope turns positive
        pj, pp = 0.5, 0.5
        assert max_g_slope("hd", pj, pp, low=3.5, high=50.0) > 0


class TestGoldenSection:
    def test_quadratic(self):
        x = golden_section_max(lambda v: -(v - 0.3) ** 2, 0.0, 1.0)
        assert float(x) == pytest.approx(0.3, abs=1e-12)

    def test_kl_example(self):
        assert pointwise_optimal_d("kl", 0.2, 0.1) == pytest.approx(2.0, abs=1e-6)

    def test_sl_example(self):
        assert pointwise_optimal_d("sl", 0.2, 0.1) == pytest.approx(1.0 / 3.0, abs=1e-6)

    @pytest.mark.parametrize("name", NAMES)
    def test_equal_densities_give_k_of_one(self, name):
        spec = get_spec(name)
        assert pointwise_optimal_d(spec, 0.4, 0.4) == pytest.approx(optimal_d_from_posterior(spec, 1.0), abs=1e-6)

    @pytest.mark.parametrize("name", NAMES)
    def test_random_pairs(self, name):
        rng = np.random.default_rng(17)
        spec = get_spec(name)
        for pj, pp in rng.uniform(0.05, 1.0, size=(100, 2)):
            assert abs(pointwise_optimal_d(spec, pj, pp) - optimal_d_from_posterior(spec, pj / pp)) < 1e-6

    def test_unbracketed_raises(self):
        # KL optimum at 1e4 lies beyond the [1e-6, 1e3] bracket
        with pytest.raises(RuntimeError, match="not bracketed"):
            pointwise_optimal_d("kl", 1.0, 1e-4)

    def test_accepts_bottom_up_spec(self):
        assert pointwise_optimal_d(CATALOGUE["gan"], 0.2, 0.1) == pytest.approx(1 / 3, abs=1e-6)


class TestSteepness:
    def test_zero_delta(self):
        assert steepness_compare(0.3, 0.2, 0.0) == (0.0, 0.0)

    def test_example(self):
        g, s = steepness_compare(0.1, 0.1, 0.01)
        assert g >= s > 0

    def test_closed_forms(self):
        # shared optimum D = a / (a + b) with a = p_prod, b = p_joint
        a, b, delta = 0.3, 0.6, 0.05
        d = a / (a + b) + delta
        g, s = steepness_compare(b, a, delta)
        assert g == pytest.approx(abs(a / d - b / (1 - d)), rel=1e-14)
        assert s == pytest.approx(abs(-(a + b) + a / d), rel=1e-14)

    def test_leaves_domain(self):
        with pytest.raises(DomainError):
            steepness_compare(0.1, 0.9, 0.2)

    @given(pj=densities, pp=densities, delta=st.sampled_from([0.01, -0.01, 0.05, -0.05]))
    @settings(max_examples=300, deadline=None)
    def test_inequality(self, pj, pp, delta):
        d_opt = pp / (pp + pj)
        if min(d_opt, 1 - d_opt) <= 0.05:
            return
        g, s = steepness_compare(pj, pp, delta)
        assert g >= s


def test_module_constants():
    assert bottom_up.GSS_ITERATIONS == 200
    assert bottom_up.search_bracket(get_spec("sl")) == (1e-6, 1 - 1e-6)
    assert bottom_up.search_bracket(get_spec("kl")) == (1e-6, 1e3)
