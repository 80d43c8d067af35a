"""Numerical certification of the bottom-up objective construction.

A bottom-up objective is fixed by a map ``k`` (posterior -> optimal output)
and a rearrangement factor ``g1(D) = -p1 / D**alpha * (1 / (1 - D))**beta``.
The per-bin derivative is ``g(D) = (D - k(p)) * g1(D)`` with
``p = p_joint / p_prod`` and ``p_prod = |T_x| p_U p_Y``.

Integrating ``g`` over ``D`` gives ``scale`` times the per-bin objective used
for training (see :func:`fdivclass.objectives.bin_integrand`), up to an additive
constant.  ``scale`` is 1 except for HD (the listed ``g1`` integrates to twice
the training integrand) and P (half of it).

The listed HD integrand is unimodal but only concave for
``D <= 3 p_prod / p_joint``, so ``g`` is non-increasing only on that range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import quad

from fdivclass.divergences import DivergenceSpec, DomainError, get_spec
from fdivclass.objectives import bin_integrand, bin_integrand_derivative

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
GSS_ITERATIONS = 200
BRACKET_EPS = 1e-6
BRACKET_HIGH = 1e3


@dataclass(frozen=True)
class BottomUpSpec:
    divergence_name: str
    k: Callable[[float], float]
    alpha: float
    beta: float
    p1: Callable[[float, float], float]
    scale: float = 1.0

    def g1(self, d, p_joint, p_prod):
        out = -self.p1(p_joint, p_prod) / d**self.alpha
        if self.beta:
            out = out / (1.0 - d) ** self.beta
        return out


def _identity(p):
    return p


def _reciprocal(p):
    return 1.0 / p


def _gan_k(p):
    return 1.0 / (1.0 + p)


CATALOGUE = {
    "kl": BottomUpSpec("kl", _identity, 1.0, 0.0, lambda pj, pp: pp),
    "rkl": BottomUpSpec("rkl", _reciprocal, 1.0, 0.0, lambda pj, pp: pj),
    "hd": BottomUpSpec("hd", _reciprocal, 1.5, 0.0, lambda pj, pp: pj, scale=2.0),
    "gan": BottomUpSpec("gan", _gan_k, 1.0, 1.0, lambda pj, pp: pp + pj),
    "p": BottomUpSpec("p", _identity, 0.0, 0.0, lambda pj, pp: pp, scale=0.5),
    # shifted log: GAN's k with beta forced to zero
    "sl": BottomUpSpec("sl", _gan_k, 1.0, 0.0, lambda pj, pp: pp + pj),
}


def _check_densities(p_joint, p_prod):
    if not (p_joint > 0 and p_prod > 0):
        raise DomainError("densities must be strictly positive")


def integrand_derivative(bspec: BottomUpSpec, d, p_joint: float, p_prod: float):
    """``g(D, k) = (D - k(p_joint / p_prod)) * g1(D, k)``."""
    _check_densities(p_joint, p_prod)
    d = np.asarray(d, dtype=float)
    dom = get_spec(bspec.divergence_name).domain_D
    if not np.all(dom.contains(d)):
        raise DomainError(f"D outside {dom}")
    target = bspec.k(p_joint / p_prod)
    out = (d - target) * bspec.g1(d, p_joint, p_prod)
    return float(out) if out.ndim == 0 else out


def golden_section_max(f, a, b, iterations: int = GSS_ITERATIONS):
    """Maximise a unimodal ``f`` on ``[a, b]`` in extended precision."""
    a = np.longdouble(a)
    b = np.longdouble(b)
    r = np.longdouble(INV_PHI)
    c = b - r * (b - a)
    d = a + r * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iterations):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - r * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + r * (b - a)
            fd = f(d)
        if b - a <= 0:
            break
    return (a + b) / 2


def search_bracket(spec: DivergenceSpec):
    if spec.domain_D.high == 1.0:
        return BRACKET_EPS, 1.0 - BRACKET_EPS
    return BRACKET_EPS, BRACKET_HIGH


def pointwise_optimal_d(spec, p_joint: float, p_prod: float) -> float:
    """Argmax over D of the per-bin objective, by golden-section search."""
    if isinstance(spec, BottomUpSpec):
        spec = get_spec(spec.divergence_name)
    elif isinstance(spec, str):
        spec = get_spec(spec)
    _check_densities(p_joint, p_prod)
    lo, hi = search_bracket(spec)
    pj = np.longdouble(p_joint)
    pp = np.longdouble(p_prod)
    x = golden_section_max(lambda d: bin_integrand(spec, d, pj, pp), lo, hi)
    width = (hi - lo) * 1e-9
    if x - lo < width or hi - x < width:
        raise RuntimeError(f"{spec.name}: optimum not bracketed in [{lo}, {hi}]")
    return float(x)


def steepness_compare(p_joint: float, p_prod: float, delta: float):
    """``(|dJ_GAN/dD|, |dJ_SL/dD|)`` at ``D_opt + delta``, where both share ``D_opt``."""
    _check_densities(p_joint, p_prod)
    d_opt = p_prod / (p_prod + p_joint)
    d = d_opt + delta
    if not 0.0 < d < 1.0:
        raise DomainError(f"D_opt + delta = {d} leaves (0, 1)")
    if delta == 0:
        return 0.0, 0.0
    mag_gan = abs(integrand_derivative(CATALOGUE["gan"], d, p_joint, p_prod))
    mag_sl = abs(integrand_derivative(CATALOGUE["sl"], d, p_joint, p_prod))
    return mag_gan, mag_sl


# ------------------------------------------------------------- certifications


def catalogue_consistency(name: str, p_joint: float, p_prod: float, n_points: int = 100) -> float:
    """Max error between the quadrature of g and the training integrand's increment.

    Both sides are measured from a reference point near the optimum, the
    training side multiplied by the catalogue's ``scale``.
    """
    bspec = CATALOGUE[name]
    spec = get_spec(name)
    d_ref = bspec.k(p_joint / p_prod)
    if spec.domain_D.high == 1.0:
        pts = np.linspace(0.02, 0.98, n_points)
    else:
        pts = np.geomspace(0.02, 50.0, n_points)
    base = bin_integrand(spec, d_ref, p_joint, p_prod)
    worst = 0.0
    for d in pts:
        integral, _ = quad(lambda s: integrand_derivative(bspec, s, p_joint, p_prod), d_ref, d,
                           epsabs=1e-13, epsrel=1e-13, limit=200)
        expected = bspec.scale * (bin_integrand(spec, d, p_joint, p_prod) - base)
        worst = max(worst, abs(integral - expected))
    return worst


def derivative_matches_objective(name: str, p_joint: float, p_prod: float, n_points: int = 100) -> float:
    """Max |g(D) - scale * dJ~/dD| over a grid of D."""
    bspec = CATALOGUE[name]
    spec = get_spec(name)
    if spec.domain_D.high == 1.0:
        pts = np.linspace(0.02, 0.98, n_points)
    else:
        pts = np.geomspace(0.02, 50.0, n_points)
    g = integrand_derivative(bspec, pts, p_joint, p_prod)
    ref = bspec.scale * bin_integrand_derivative(spec, pts, p_joint, p_prod)
    return float(np.max(np.abs(g - ref)))


def concave_range(name: str, p_joint: float, p_prod: float):
    """Interval of D on which the per-bin integrand is concave, clipped to a finite grid range."""
    spec = get_spec(name)
    if spec.domain_D.high == 1.0:
        return 0.01, 0.99
    if name == "hd":
        return 0.01, min(100.0, 3.0 * p_prod / p_joint)
    return 0.01, 100.0


def max_g_slope(name: str, p_joint: float, p_prod: float, low=None, high=None, h: float = 1e-6) -> float:
    """Largest forward-difference slope of g over a grid (non-positive when concave).

    Defaults to :func:`concave_range`.
    """
    bspec = CATALOGUE[name]
    lo, hi = concave_range(name, p_joint, p_prod)
    lo = lo if low is None else low
    hi = hi if high is None else high
    pts = np.geomspace(lo, hi - h, 200)
    g0 = integrand_derivative(bspec, pts, p_joint, p_prod)
    g1 = integrand_derivative(bspec, pts + h, p_joint, p_prod)
    return float(np.max((g1 - g0) / h))
