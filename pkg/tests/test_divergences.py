import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fdivclass.divergences import (
    NAMES,
    DivergenceSpec,
    DomainError,
    brute_force_conjugate,
    eval_f,
    eval_f_at_zero,
    eval_f_prime,
    eval_f_raw,
    eval_f_star,
    eval_f_star_prime,
    eval_f_star_second,
    get_spec,
    numeric_f_divergence,
    sl_upper_bound,
)
from fdivclass.verify import inverse_f_prime, valid_t_grid

# D_f(P||Q) for P=[.5,.5], Q=[.25,.75]; mpmath at 30 digits
FROZEN_DIVERGENCE = {
    "kl": 0.143841036225890463719609502997,
    "rkl": 0.130812035941136959129201806234,
    "hd": 0.0681483474218634265005136005422,
    "gan": 0.067644151137210460000747197842,
    "p": 1.0 / 3.0,
    "sl": 0.0353748905684248741642852399999,
}


class TestSpec:
    def test_name_is_normalised(self):
        assert DivergenceSpec("SL").name == "sl"

    def test_unknown_name(self):
        with pytest.raises(ValueError, match="unknown divergence"):
            get_spec("js")

    @pytest.mark.parametrize("tx", [0.0, -1.0, math.inf, math.nan])
    def test_bad_measure(self, tx):
        with pytest.raises(ValueError):
            get_spec("kl", tx)

    @pytest.mark.parametrize("name", NAMES)
    @pytest.mark.parametrize("tx", [1.0, 4.0, 6.9])
    def test_generator_vanishes_at_one(self, name, tx):
        spec = get_spec(name, tx)
        assert eval_f(spec, 1.0) == pytest.approx(0.0, abs=1e-12)
        assert eval_f(spec, 1.0, supervised=True) == pytest.approx(0.0, abs=1e-12)

    def test_sl_constant_matches_closed_form(self):
        # for SL lifted by T, K = T log(1 + 1/T) + T ... equivalently -T f_raw(1/T)
        for tx in (1.0, 2.0, 4.0):
            expected = tx * (math.log(1.0 / tx + 1.0) + 1.0)
            assert get_spec("sl", tx).constant_term == pytest.approx(expected, rel=1e-14)

    @pytest.mark.parametrize("name,activation", [("kl", "softplus"), ("gan", "sigmoid"), ("sl", "sigmoid"), ("p", "softplus")])
    def test_activation_kind(self, name, activation):
        assert get_spec(name).activation_kind == activation


class TestGenerators:
    def test_supervised_sl_generator(self):
        u = np.array([0.1, 1.0, 3.0])
        np.testing.assert_allclose(eval_f(get_spec("sl"), u, supervised=True), -np.log(u + 1) + math.log(2), rtol=1e-14)

    @pytest.mark.parametrize("name", NAMES)
    def test_generator_convex(self, name):
        u = np.geomspace(1e-3, 1e3, 400)
        f = eval_f(get_spec(name, 3.0), u)
        # convexity on an irregular grid: slopes non-decreasing
        slopes = np.diff(f) / np.diff(u)
        assert np.all(np.diff(slopes) >= -1e-9 * np.abs(slopes[1:]).max())

    @pytest.mark.parametrize("name", NAMES)
    def test_f_prime_matches_finite_difference(self, name):
        spec = get_spec(name, 2.5)
        u = np.geomspace(0.05, 20.0, 30)
        h = 1e-6 * u
        fd = (eval_f_raw(spec, u + h) - eval_f_raw(spec, u - h)) / (2 * h)
        np.testing.assert_allclose(eval_f_prime(spec, u), fd, rtol=1e-6, atol=1e-8)

    @pytest.mark.parametrize("bad", [0.0, -1.0, math.nan])
    def test_generator_domain(self, bad):
        with pytest.raises(DomainError):
            eval_f(get_spec("kl"), bad)

    @pytest.mark.parametrize("name", NAMES)
    def test_limit_at_zero(self, name):
        spec = get_spec(name, 2.0)
        limit = eval_f_at_zero(spec)
        if math.isfinite(limit):
            assert eval_f(spec, 1e-12) == pytest.approx(limit, abs=1e-4)
        else:
            assert eval_f(spec, 1e-12) > 20


class TestConjugate:
    def test_sl_measure_four(self):
        # spec example: SL with T=4 at t=-1 gives 4
        assert eval_f_star(get_spec("sl", 4.0), -1.0) == pytest.approx(4.0, abs=1e-12)

    @pytest.mark.parametrize(
        "name,t,expected",
        [
            ("kl", 0.5, math.exp(-0.5)),
            ("gan", -1.0, 0.458675145387081891021643645067),
            ("hd", 0.5, 1.0),
            ("sl", -0.5, 1.19314718055994530941723212146),
            ("p", 2.0, 3.0),
            ("rkl", -2.0, -1.0 - math.log(2.0)),
        ],
    )
    def test_frozen_values(self, name, t, expected):
        assert eval_f_star(get_spec(name), t, supervised=True) == pytest.approx(expected, rel=1e-14)

    def test_mpmath_sup_oracle(self):
        # sup_u {u t - f_raw(u)} for SL at t = -0.5, solved by mpmath root finding
        u = mp.findroot(lambda v: mp.mpf(-0.5) + 1 / (v + 1), 0.5)
        sup = u * mp.mpf(-0.5) + mp.log(u + 1) + 1
        assert eval_f_star(get_spec("sl"), -0.5, supervised=True) == pytest.approx(float(sup), rel=1e-14)

    @pytest.mark.parametrize("name", NAMES)
    @pytest.mark.parametrize("tx", [1.0, 4.0])
    def test_brute_force_duality(self, name, tx):
        spec = get_spec(name, tx)
        for t in valid_t_grid(name, 50):
            assert abs(eval_f_star(spec, t) - brute_force_conjugate(spec, t)) < 1e-3

    @pytest.mark.parametrize("name", NAMES)
    def test_normalized_is_conjugate_of_normalized_generator(self, name):
        spec = get_spec(name, 3.0)
        for t in valid_t_grid(name, 10):
            assert eval_f_star(spec, t, normalized=True) == pytest.approx(
                brute_force_conjugate(spec, t, normalized=True), abs=1e-3)

    @pytest.mark.parametrize("name,t", [("rkl", 0.0), ("gan", 0.1), ("hd", 1.0), ("p", -2.5), ("sl", -1.5), ("sl", 0.0)])
    def test_outside_domain(self, name, t):
        with pytest.raises(DomainError):
            eval_f_star(get_spec(name), t)

    def test_boundary_allowed_for_value_not_derivative(self):
        spec = get_spec("sl")
        eval_f_star(spec, -1.0)
        with pytest.raises(DomainError):
            eval_f_star_prime(spec, -1.0)

    def test_sl_second_derivative(self):
        # d^2/dt^2 of -(log(-t) + t) at -0.5, by mpmath differentiation
        expected = float(mp.diff(lambda t: -(mp.log(-t) + t), -0.5, 2))
        assert expected == pytest.approx(4.0)
        assert eval_f_star_second(get_spec("sl"), -0.5, supervised=True) == pytest.approx(expected, rel=1e-14)

    @pytest.mark.parametrize("name", NAMES)
    def test_derivatives_match_finite_differences(self, name):
        spec = get_spec(name, 2.0)
        ts = valid_t_grid(name, 20)[2:-2]
        h = 1e-5
        d1 = (eval_f_star(spec, ts + h) - eval_f_star(spec, ts - h)) / (2 * h)
        d2 = (eval_f_star_prime(spec, ts + h) - eval_f_star_prime(spec, ts - h)) / (2 * h)
        np.testing.assert_allclose(eval_f_star_prime(spec, ts), d1, rtol=1e-6, atol=1e-8)
        np.testing.assert_allclose(eval_f_star_second(spec, ts), d2, rtol=1e-5, atol=1e-7)

    @pytest.mark.parametrize("name", NAMES)
    def test_derivative_inverts_generator_derivative(self, name):
        spec = get_spec(name)
        for t in valid_t_grid(name, 50):
            u = inverse_f_prime(name, float(t))
            assert abs(eval_f_star_prime(spec, t, supervised=True) - u) <= 1e-6 * max(1.0, u)

    @given(st.sampled_from(NAMES), st.floats(0.01, 50.0), st.floats(0.5, 8.0))
    @settings(max_examples=200, deadline=None)
    def test_fenchel_young_equality(self, name, u, tx):
        # at t = f'(u): f(u) + f*(t) = u t
        spec = get_spec(name, tx)
        t = eval_f_prime(spec, u)
        lhs = eval_f_raw(spec, u) + eval_f_star(spec, t)
        assert lhs == pytest.approx(u * t, rel=1e-9, abs=1e-9)


class TestNumericDivergence:
    @pytest.mark.parametrize("name", NAMES)
    def test_frozen(self, name):
        p, q = [0.5, 0.5], [0.25, 0.75]
        assert numeric_f_divergence(get_spec(name), p, q) == pytest.approx(FROZEN_DIVERGENCE[name], rel=1e-13)

    @pytest.mark.parametrize("name", NAMES)
    def test_zero_when_equal(self, name):
        p = np.array([0.2, 0.3, 0.5])
        assert abs(numeric_f_divergence(get_spec(name), p, p)) < 1e-12

    def test_sl_bound(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            k = rng.integers(2, 10)
            p, q = rng.dirichlet(np.ones(k)), rng.dirichlet(np.ones(k))
            p, q = np.maximum(p, 1e-12), np.maximum(q, 1e-12)
            p, q = p / math.fsum(p), q / math.fsum(q)
            v = numeric_f_divergence(get_spec("sl"), p, q)
            assert 0.0 <= v <= sl_upper_bound()

    def test_sl_bound_approached(self):
        # nearly disjoint supports push the SL divergence toward log 2
        p = np.array([1 - 1e-9, 1e-9])
        q = np.array([1e-9, 1 - 1e-9])
        assert numeric_f_divergence(get_spec("sl"), p, q) == pytest.approx(math.log(2), abs=1e-6)

    def test_validation(self):
        spec = get_spec("kl")
        with pytest.raises(ValueError, match="supports differ"):
            numeric_f_divergence(spec, [0.5, 0.5], [1.0])
        with pytest.raises(ValueError, match="strictly positive"):
            numeric_f_divergence(spec, [1.0, 0.0], [0.5, 0.5])
        with pytest.raises(ValueError, match="normalised"):
            numeric_f_divergence(spec, [0.5, 0.6], [0.5, 0.5])
