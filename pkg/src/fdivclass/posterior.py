"""From discriminator outputs to posterior estimates and MAP decisions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fdivclass.divergences import DivergenceSpec, DomainError, eval_f_star_second
from fdivclass.objectives import change_of_variable


@dataclass
class PosteriorEstimate:
    values: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if np.any(self.values < 0):
            raise ValueError("posterior estimates must be nonnegative")

    def normalize(self) -> "PosteriorEstimate":
        s = self.values.sum(axis=-1, keepdims=True)
        return PosteriorEstimate(self.values / s, normalized=True)


def _check_d(spec: DivergenceSpec, d):
    d = np.asarray(d, dtype=float)
    if not np.all(spec.domain_D.contains(d)):
        raise DomainError(f"{spec.name}: discriminator output outside {spec.domain_D}")
    return d


def posterior_from_d(spec: DivergenceSpec, d):
    """Invert the optimal-discriminator map: KL, P -> D; RKL, HD -> 1/D; GAN, SL -> (1-D)/D."""
    d = _check_d(spec, d)
    if spec.name in ("kl", "p"):
        out = d.copy()
    elif spec.name in ("rkl", "hd"):
        out = 1.0 / d
    else:
        out = (1.0 - d) / d
    return float(out) if out.ndim == 0 else out


def optimal_d_from_posterior(spec: DivergenceSpec, p):
    """The map ``k``: posterior value -> optimal discriminator output."""
    p = np.asarray(p, dtype=float)
    if np.any(~(p > 0)):
        raise DomainError("posterior value must be positive")
    if spec.name in ("kl", "p"):
        out = p.copy()
    elif spec.name in ("rkl", "hd"):
        out = 1.0 / p
    else:
        out = 1.0 / (1.0 + p)
    return float(out) if out.ndim == 0 else out


def map_classify(estimates):
    """Index of the largest estimate; ties go to the lowest index.

    Accepts a vector or a batch of rows.
    """
    v = np.asarray(estimates, dtype=float)
    if v.size == 0 or v.shape[-1] == 0:
        raise ValueError("cannot classify an empty vector")
    if not np.all(np.isfinite(v)):
        raise ValueError("estimates must be finite")
    idx = np.argmax(v, axis=-1)
    return int(idx) if v.ndim == 1 else idx


def posterior_gap_estimate(spec: DivergenceSpec, d_current, d_optimal) -> float:
    """First-order estimate of ``p_opt - p_current`` from the conjugate's curvature.

    ``(1/|T_x|) * delta * (f_u*)''(r(D))`` with ``delta = r(D_opt) - r(D)``;
    the |T_x| factors cancel, leaving the supervised second derivative.
    """
    d_cur = float(_check_d(spec, d_current))
    d_opt = float(_check_d(spec, d_optimal))
    t_cur = change_of_variable(spec.name, d_cur)
    delta = change_of_variable(spec.name, d_opt) - t_cur
    if delta == 0.0:
        return 0.0
    curvature = eval_f_star_second(spec, t_cur, supervised=False) / spec.tx_measure
    return float(delta * curvature)
