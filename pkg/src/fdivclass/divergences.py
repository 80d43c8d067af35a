"""Generator functions, Fenchel conjugates and derivatives for six f-divergences.

Every divergence is described by a *raw* generator ``f_raw`` and its exact
Fenchel conjugate ``f_star``.  The raw generator of the supervised form is the
exact dual of the tabulated conjugate, so ``f_raw(1)`` is not always zero.  The
constant that restores ``f(1) = 0`` is stored explicitly on the ``DivergenceSpec``
(:attr:`DivergenceSpec.constant_term`) and added by :func:`eval_f`.

The unsupervised form lifts the supervised pair by the support measure
``T = |T_x|``::

    f_u*(t) = T * f*(t)        f_u(u) = T * f_raw(u / T) + K

so the conjugates of the two forms differ by the factor ``T`` only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

NAMES = ("kl", "rkl", "hd", "gan", "p", "sl")

_LOG2 = math.log(2.0)


class DomainError(ValueError):
    """Raised when an argument lies outside the domain of a function."""


@dataclass(frozen=True)
class Interval:
    """Interval with independently open or closed ends."""

    low: float
    high: float
    low_closed: bool = False
    high_closed: bool = False

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x)
        lo = x >= self.low if self.low_closed else x > self.low
        hi = x <= self.high if self.high_closed else x < self.high
        return lo & hi

    def interior(self, x) -> np.ndarray:
        x = np.asarray(x)
        return (x > self.low) & (x < self.high)


# Domains of the conjugates on which the closed form equals sup_{u>0}{ut - f(u)}.
_CONJ_DOMAIN = {
    "kl": Interval(-math.inf, math.inf),
    "rkl": Interval(-math.inf, 0.0),
    "hd": Interval(-math.inf, 1.0),
    "gan": Interval(-math.inf, 0.0),
    "p": Interval(-2.0, math.inf, low_closed=True),
    "sl": Interval(-1.0, 0.0, low_closed=True),
}

# Valid discriminator outputs.
_D_DOMAIN = {
    "kl": Interval(0.0, math.inf),
    "rkl": Interval(0.0, math.inf),
    "hd": Interval(0.0, math.inf),
    "gan": Interval(0.0, 1.0),
    "p": Interval(0.0, math.inf),
    "sl": Interval(0.0, 1.0),
}

_ACTIVATION = {
    "kl": "softplus",
    "rkl": "softplus",
    "hd": "softplus",
    "gan": "sigmoid",
    "p": "softplus",
    "sl": "sigmoid",
}


def _f_raw(name: str, u):
    """Supervised raw generator, the exact dual of the tabulated conjugate."""
    if name == "kl":
        return u * np.log(u)
    if name == "rkl":
        return -np.log(u)
    if name == "hd":
        return (np.sqrt(u) - 1.0) ** 2
    if name == "gan":
        return u * np.log(u) - (u + 1.0) * np.log(u + 1.0)
    if name == "p":
        return (u - 1.0) ** 2
    if name == "sl":
        return -np.log(u + 1.0) - 1.0
    raise KeyError(name)


def _f_raw_at_zero(name: str) -> float:
    # right limits f(0+); +inf where the generator blows up
    return {"kl": 0.0, "rkl": math.inf, "hd": 1.0, "gan": 0.0, "p": 1.0, "sl": -1.0}[name]


def _f_prime(name: str, u):
    if name == "kl":
        return np.log(u) + 1.0
    if name == "rkl":
        return -1.0 / u
    if name == "hd":
        return 1.0 - 1.0 / np.sqrt(u)
    if name == "gan":
        return np.log(u / (u + 1.0))
    if name == "p":
        return 2.0 * (u - 1.0)
    if name == "sl":
        return -1.0 / (u + 1.0)
    raise KeyError(name)


def _conj(name: str, t):
    if name == "kl":
        return np.exp(t - 1.0)
    if name == "rkl":
        return -1.0 - np.log(-t)
    if name == "hd":
        return t / (1.0 - t)
    if name == "gan":
        return -np.log1p(-np.exp(t))
    if name == "p":
        return 0.25 * t * t + t
    if name == "sl":
        return -(np.log(-t) + t)
    raise KeyError(name)


def _conj_prime(name: str, t):
    if name == "kl":
        return np.exp(t - 1.0)
    if name == "rkl":
        return -1.0 / t
    if name == "hd":
        return 1.0 / (1.0 - t) ** 2
    if name == "gan":
        e = np.exp(t)
        return e / (1.0 - e)
    if name == "p":
        return 0.5 * t + 1.0
    if name == "sl":
        return -1.0 / t - 1.0
    raise KeyError(name)


def _conj_second(name: str, t):
    if name == "kl":
        return np.exp(t - 1.0)
    if name == "rkl":
        return 1.0 / (t * t)
    if name == "hd":
        return 2.0 / (1.0 - t) ** 3
    if name == "gan":
        e = np.exp(t)
        return e / (1.0 - e) ** 2
    if name == "p":
        return 0.5 * np.ones_like(np.asarray(t, dtype=float))
    if name == "sl":
        return 1.0 / (t * t)
    raise KeyError(name)


@dataclass(frozen=True)
class DivergenceSpec:
    """One f-divergence together with the support measure used by its lift.

    ``tx_measure`` is |T_x|: the number of classes for a finite alphabet or the
    length of the truncation box for a continuous input.  The supervised form
    always uses a unit measure.
    """

    name: str
    tx_measure: float = 1.0

    def __post_init__(self):
        name = self.name.lower()
        if name not in NAMES:
            raise ValueError(f"unknown divergence {self.name!r}; expected one of {NAMES}")
        object.__setattr__(self, "name", name)
        if not (self.tx_measure > 0 and math.isfinite(self.tx_measure)):
            raise ValueError(f"tx_measure must be a positive finite number, got {self.tx_measure}")

    def measure(self, supervised: bool) -> float:
        return 1.0 if supervised else float(self.tx_measure)

    def constant(self, supervised: bool = False) -> float:
        """Additive constant that makes the generator vanish at one."""
        m = self.measure(supervised)
        return -m * float(_f_raw(self.name, 1.0 / m))

    @property
    def constant_term(self) -> float:
        return self.constant(supervised=False)

    @property
    def domain_D(self) -> Interval:
        return _D_DOMAIN[self.name]

    @property
    def conjugate_domain(self) -> Interval:
        return _CONJ_DOMAIN[self.name]

    @property
    def activation_kind(self) -> str:
        return _ACTIVATION[self.name]


def get_spec(name: str, tx_measure: float = 1.0) -> DivergenceSpec:
    return DivergenceSpec(name, tx_measure)


def _check_positive(u):
    u = np.asarray(u, dtype=float) if not isinstance(u, np.ndarray) else u
    if np.any(~(u > 0)):
        raise DomainError("generator argument must be strictly positive")
    return u


def _check_conj(spec: DivergenceSpec, t, interior: bool):
    t = np.asarray(t, dtype=float) if not isinstance(t, np.ndarray) else t
    dom = spec.conjugate_domain
    ok = dom.interior(t) if interior else dom.contains(t)
    if not np.all(ok):
        where = "interior of " if interior else ""
        raise DomainError(f"{spec.name}: t outside {where}conjugate domain {dom}")
    return t


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def eval_f_raw(spec: DivergenceSpec, u, supervised: bool = False):
    """Generator without the normalising constant (exact dual of :func:`eval_f_star`)."""
    u = _check_positive(u)
    m = spec.measure(supervised)
    return _out(m * _f_raw(spec.name, u / m))


def eval_f(spec: DivergenceSpec, u, supervised: bool = False):
    """Normalised generator with ``f(1) = 0``."""
    return _out(eval_f_raw(spec, u, supervised) + spec.constant(supervised))


def eval_f_at_zero(spec: DivergenceSpec, supervised: bool = False) -> float:
    """Right limit ``f(0+)`` of the normalised generator."""
    m = spec.measure(supervised)
    return m * _f_raw_at_zero(spec.name) + spec.constant(supervised)


def eval_f_prime(spec: DivergenceSpec, u, supervised: bool = False):
    u = _check_positive(u)
    m = spec.measure(supervised)
    return _out(_f_prime(spec.name, u / m))


def eval_f_star(spec: DivergenceSpec, t, supervised: bool = False, normalized: bool = False):
    """Fenchel conjugate in closed form.

    With ``normalized=False`` this is the conjugate of the raw generator, i.e.
    the tabulated expression scaled by |T_x|.  With ``normalized=True`` it is
    the conjugate of :func:`eval_f`, which differs by ``-constant``.
    """
    t = _check_conj(spec, t, interior=False)
    val = spec.measure(supervised) * _conj(spec.name, t)
    if normalized:
        val = val - spec.constant(supervised)
    return _out(val)


def eval_f_star_prime(spec: DivergenceSpec, t, supervised: bool = False):
    t = _check_conj(spec, t, interior=True)
    return _out(spec.measure(supervised) * _conj_prime(spec.name, t))


def eval_f_star_second(spec: DivergenceSpec, t, supervised: bool = False):
    t = _check_conj(spec, t, interior=True)
    return _out(spec.measure(supervised) * _conj_second(spec.name, t))


def default_u_grid(n: int = 10_000, low: float = 1e-4, high: float = 1e3) -> np.ndarray:
    return np.geomspace(low, high, n)


def brute_force_conjugate(
    spec: DivergenceSpec,
    t: float,
    u_grid: np.ndarray | None = None,
    supervised: bool = False,
    normalized: bool = False,
) -> float:
    """Grid maximum of ``u t - f(u)``; independent check on :func:`eval_f_star`."""
    u = default_u_grid() if u_grid is None else np.asarray(u_grid, dtype=float)
    f = eval_f(spec, u, supervised) if normalized else eval_f_raw(spec, u, supervised)
    return float(np.max(u * t - f))


def numeric_f_divergence(spec: DivergenceSpec, p, q, supervised: bool = True) -> float:
    """``sum_i q_i f(p_i / q_i)`` for two strictly positive pmfs on one support."""
    p = np.asarray(p, dtype=float).ravel()
    q = np.asarray(q, dtype=float).ravel()
    if p.shape != q.shape:
        raise ValueError(f"supports differ: {p.shape} vs {q.shape}")
    if np.any(p <= 0) or np.any(q <= 0):
        raise ValueError("both distributions must be strictly positive")
    for label, arr in (("P", p), ("Q", q)):
        if abs(math.fsum(arr) - 1.0) > 1e-12:
            raise ValueError(f"{label} is not normalised (sum={math.fsum(arr)!r})")
    terms = q * np.asarray(eval_f(spec, p / q, supervised))
    return math.fsum(terms)


def sl_upper_bound() -> float:
    """Upper end of the range of values of the supervised SL divergence."""
    return _LOG2
