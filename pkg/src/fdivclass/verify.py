"""Numerical certification suite behind ``fdivclass verify``.

Each check returns a :class:`CheckResult` carrying the worst observed error and
the tolerance it was held to.  Random draws come from named substreams of one
seed, so a report is reproducible.
"""

from __future__ import annotations

import functools
import inspect
import math
import time
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from fdivclass import bottom_up, nn
from fdivclass.divergences import (
    NAMES,
    brute_force_conjugate,
    eval_f_prime,
    eval_f_star,
    eval_f_star_prime,
    get_spec,
    numeric_f_divergence,
    sl_upper_bound,
)
from fdivclass.io import substream
from fdivclass.objectives import (
    cross_entropy_from_probs,
    supervised_loss_from_d,
    unsupervised_loss_from_d,
    variational_value,
)
from fdivclass.posterior import optimal_d_from_posterior


@dataclass
class CheckResult:
    name: str
    passed: bool
    worst: float
    tolerance: float
    detail: str = ""
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f" ({self.detail})" if self.detail else ""
        return f"{status} {self.name}: worst={self.worst:.3e} tol={self.tolerance:.1e}{extra}"


def _timed(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - t0
        return res

    return wrapper


def valid_t_grid(name: str, n: int = 50, u_low: float = 1e-2, u_high: float = 10.0) -> np.ndarray:
    """Conjugate arguments whose maximiser ``u`` lies in ``[u_low, u_high]``.

    The window is the image of ``f'`` over that range (supervised form), so
    every point is interior to the conjugate domain and the supremum is
    attained well inside the brute-force grid, even after lifting by |T_x|.
    """
    spec = get_spec(name)
    lo = eval_f_prime(spec, u_low, supervised=True)
    hi = eval_f_prime(spec, u_high, supervised=True)
    return np.linspace(lo, hi, n)


def inverse_f_prime(name: str, t: float, supervised: bool = True) -> float:
    """Root of ``f'(u) = t`` over ``u > 0`` by bracketed bisection."""
    spec = get_spec(name)
    lo, hi = 1e-300, 1.0
    fp = lambda u: eval_f_prime(spec, u, supervised) - t  # noqa: E731
    while fp(hi) < 0:
        hi *= 2.0
        if hi > 1e300:
            raise ValueError(f"{name}: f' never reaches {t}")
    if fp(lo) > 0:
        raise ValueError(f"{name}: f'(0+) already exceeds {t}")
    return brentq(fp, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=2000)


# --------------------------------------------------------------------- checks


@_timed
def check_conjugate_duality(n_points: int = 50, tol: float = 1e-3, tx_values=(1.0, 4.0)) -> CheckResult:
    """Closed-form conjugate against the brute-force grid supremum."""
    worst = 0.0
    for name in NAMES:
        for tx in tx_values:
            spec = get_spec(name, tx)
            for t in valid_t_grid(name, n_points):
                # raw forms on both sides; closed forms use the supervised table scaled by |T_x|
                err = abs(eval_f_star(spec, t) - brute_force_conjugate(spec, t))
                worst = max(worst, err)
    return CheckResult("conjugate duality", worst <= tol, worst, tol, f"{len(NAMES)} divergences x |T_x| in {tx_values}")


@_timed
def check_derivative_inverse(n_points: int = 50, tol: float = 1e-6) -> CheckResult:
    """``(f*)'`` equals the inverse of ``f'`` (relative error)."""
    worst = 0.0
    for name in NAMES:
        spec = get_spec(name)
        for t in valid_t_grid(name, n_points):
            u = inverse_f_prime(name, float(t))
            err = abs(eval_f_star_prime(spec, t, supervised=True) - u) / max(1.0, abs(u))
            worst = max(worst, err)
    return CheckResult("conjugate derivative inverts generator derivative", worst <= tol, worst, tol)


def random_pmf(rng, k: int) -> np.ndarray:
    p = rng.dirichlet(np.ones(k))
    p = np.maximum(p, 1e-12)
    return p / math.fsum(p)


@_timed
def check_sl_bound(n_pairs: int = 1000, seed: int = 0, tol_equal: float = 1e-12) -> CheckResult:
    """Supervised SL divergence lies in ``[0, log 2]``; exactly zero when P = Q."""
    rng = substream(seed, "verify", "sl-bound")
    spec = get_spec("sl")
    bound = sl_upper_bound()
    low, high = math.inf, -math.inf
    worst_equal = 0.0
    for _ in range(n_pairs):
        k = int(rng.integers(2, 20))
        p, q = random_pmf(rng, k), random_pmf(rng, k)
        v = numeric_f_divergence(spec, p, q)
        low, high = min(low, v), max(high, v)
        worst_equal = max(worst_equal, abs(numeric_f_divergence(spec, p, p)))
    ok = low >= 0.0 and high <= bound and worst_equal <= tol_equal
    return CheckResult("SL divergence bounded by log 2", ok, worst_equal, tol_equal,
                       f"range [{low:.4g}, {high:.4g}] within [0, {bound:.6f}]")


def random_density_pair(rng):
    return tuple(float(v) for v in rng.uniform(0.05, 1.0, size=2))


@_timed
def check_pointwise_optimum(n_pairs: int = 100, seed: int = 0, tol: float = 1e-6) -> CheckResult:
    """Golden-section argmax of each per-bin objective equals ``k(p_joint / p_prod)``."""
    rng = substream(seed, "verify", "pointwise")
    pairs = [random_density_pair(rng) for _ in range(n_pairs)]
    worst = 0.0
    for name in NAMES:
        spec = get_spec(name)
        for pj, pp in pairs:
            expected = optimal_d_from_posterior(spec, pj / pp)
            worst = max(worst, abs(bottom_up.pointwise_optimal_d(spec, pj, pp) - expected))
    return CheckResult("per-bin maximiser matches optimal discriminator", worst <= tol, worst, tol)


def discrete_toy(rng, n_x: int, n_y: int):
    """Random strictly positive joint table with uniform X marginal reference."""
    joint = rng.dirichlet(np.ones(n_x * n_y)).reshape(n_x, n_y)
    joint = np.maximum(joint, 1e-9)
    joint /= joint.sum()
    p_y = joint.sum(axis=0)
    product = np.outer(np.full(n_x, 1.0 / n_x), p_y)
    return joint, product


@_timed
def check_variational_tightness(n_toys: int = 20, seed: int = 0, tol: float = 1e-6) -> CheckResult:
    """At the optimal discriminator the variational value equals the f-divergence.

    On a fully discrete toy the unsupervised generator with ``|T_x| = n_x``
    measures ``D_f(p_XY || p_U p_Y)``.
    """
    rng = substream(seed, "verify", "tightness")
    worst = 0.0
    for _ in range(n_toys):
        n_x, n_y = int(rng.integers(2, 6)), int(rng.integers(2, 6))
        joint, product = discrete_toy(rng, n_x, n_y)
        for name in NAMES:
            spec = get_spec(name, tx_measure=float(n_x))
            posterior = joint / (n_x * product)
            d_opt = optimal_d_from_posterior(spec, posterior)
            value = variational_value(spec, d_opt, joint, product)
            exact = numeric_f_divergence(spec, joint.ravel(), product.ravel(), supervised=False)
            worst = max(worst, abs(value - exact))
    return CheckResult("variational value is tight at the optimum", worst <= tol, worst, tol)


@_timed
def check_catalogue(n_pairs: int = 10, seed: int = 0, tol: float = 1e-8) -> CheckResult:
    """g matches the derivative of the training integrand, and integrates back to it."""
    rng = substream(seed, "verify", "catalogue")
    worst = 0.0
    for _ in range(n_pairs):
        pj, pp = random_density_pair(rng)
        for name in bottom_up.CATALOGUE:
            worst = max(worst, bottom_up.derivative_matches_objective(name, pj, pp))
            worst = max(worst, bottom_up.catalogue_consistency(name, pj, pp, n_points=20))
    return CheckResult("bottom-up catalogue reproduces the objectives", worst <= tol, worst, tol)


@_timed
def check_g_monotone(n_pairs: int = 20, seed: int = 0, tol: float = 1e-8) -> CheckResult:
    """g is non-increasing in D wherever the integrand is concave."""
    rng = substream(seed, "verify", "monotone")
    worst = -math.inf
    for _ in range(n_pairs):
        pj, pp = random_density_pair(rng)
        for name in bottom_up.CATALOGUE:
            worst = max(worst, bottom_up.max_g_slope(name, pj, pp))
    return CheckResult("g non-increasing on the concave range", worst <= tol, worst, tol)


@_timed
def check_steepness(n_pairs: int = 1000, seed: int = 0, deltas=(0.01, 0.05)) -> CheckResult:
    """GAN's per-bin derivative is at least as steep as SL's near their shared optimum."""
    rng = substream(seed, "verify", "steepness")
    violations = 0
    tested = 0
    worst_margin = math.inf
    while tested < n_pairs:
        pj, pp = random_density_pair(rng)
        d_opt = pp / (pp + pj)
        if min(d_opt, 1.0 - d_opt) <= max(deltas):
            continue
        tested += 1
        for delta in deltas:
            for sgn in (1.0, -1.0):
                g, s = bottom_up.steepness_compare(pj, pp, sgn * delta)
                worst_margin = min(worst_margin, g - s)
                violations += g < s
    return CheckResult("GAN steeper than SL near the optimum", violations == 0, float(violations), 0.0,
                       f"{tested} pairs, min margin {worst_margin:.3e}")


def _layer_nets(seed: int):
    """Networks covering every activation in both architectures."""
    nets = []
    for hidden in ("leaky_relu", "sigmoid", "softplus", "linear"):
        for out in ("sigmoid", "softplus", "linear"):
            nets.append(("unsupervised", nn.DiscriminatorNet.build(
                [3, 5, 4, 1], output_activation=out, hidden_activation=hidden,
                mode="unsupervised", seed=seed)))
        for out in ("sigmoid", "softplus", "softmax"):
            nets.append(("supervised", nn.DiscriminatorNet.build(
                [2, 5, 4, 3], output_activation=out, hidden_activation=hidden,
                mode="supervised", seed=seed)))
    return nets


@_timed
def check_gradients(seed: int = 0, tol: float = 1e-4) -> CheckResult:
    """Backpropagated gradients against central differences for every layer type."""
    rng = substream(seed, "verify", "gradients")
    worst = 0.0
    for mode, net in _layer_nets(seed):
        out_act = net.layers[-1].activation
        if mode == "unsupervised":
            name = {"sigmoid": "sl", "softplus": "kl", "linear": "p"}[out_act]
            spec = get_spec(name, tx_measure=2.0)
            x = rng.normal(size=(8, net.n_in))

            def loss_and_grad(out, spec=spec):
                if spec.name == "p":
                    return 0.5 * float(np.sum(out**2)), out
                loss, gj, gm = unsupervised_loss_from_d(spec, out[:4], out[4:])
                return loss, np.concatenate([gj, gm])
        else:
            labels = rng.integers(0, net.n_out, size=6)
            x = rng.normal(size=(6, net.n_in))
            if out_act == "softmax":
                loss_and_grad = lambda out, labels=labels: cross_entropy_from_probs(out, labels)  # noqa: E731
            else:
                spec = get_spec("sl" if out_act == "sigmoid" else "hd")
                loss_and_grad = (lambda out, spec=spec, labels=labels:  # noqa: E731
                                 supervised_loss_from_d(spec, out, labels))
        worst = max(worst, nn.gradient_check(net, x, loss_and_grad))
    return CheckResult("backpropagation matches finite differences", worst < tol, worst, tol)


@_timed
def check_kl_cross_entropy(n_batches: int = 20, seed: int = 0, tol: float = 1e-10) -> CheckResult:
    """Supervised KL with a softmax output has the cross-entropy gradient."""
    rng = substream(seed, "verify", "kl-ce")
    spec = get_spec("kl")
    worst = 0.0
    for b in range(n_batches):
        m = int(rng.integers(2, 8))
        net = nn.DiscriminatorNet.build([3, 16, m], output_activation="softmax", seed=b)
        x = rng.normal(size=(32, 3))
        labels = rng.integers(0, m, size=32)
        out, tape = nn.forward(net, x)
        _, g_kl = supervised_loss_from_d(spec, out, labels, softmax_output=True)
        _, g_ce = cross_entropy_from_probs(out, labels)
        grads_kl = nn.backward(tape, g_kl)
        grads_ce = nn.backward(tape, g_ce)
        for a, c in zip(grads_kl, grads_ce):
            worst = max(worst, float(np.max(np.abs(a - c))))
    return CheckResult("supervised KL gradient equals cross-entropy gradient", worst < tol, worst, tol)


CHECKS = {
    "conjugate": check_conjugate_duality,
    "derivative-inverse": check_derivative_inverse,
    "sl-bound": check_sl_bound,
    "pointwise-optimum": check_pointwise_optimum,
    "tightness": check_variational_tightness,
    "catalogue": check_catalogue,
    "monotone": check_g_monotone,
    "steepness": check_steepness,
    "gradients": check_gradients,
    "kl-ce": check_kl_cross_entropy,
}


def run_suite(names=None, seed: int = 0) -> list:
    names = list(CHECKS) if names is None else list(names)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise KeyError(f"unknown checks {unknown}; available: {sorted(CHECKS)}")
    results = []
    for n in names:
        fn = CHECKS[n]
        kwargs = {"seed": seed} if "seed" in inspect.signature(fn).parameters else {}
        results.append(fn(**kwargs))
    return results
