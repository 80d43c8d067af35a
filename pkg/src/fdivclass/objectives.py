"""Training objectives for the unsupervised and supervised discriminators.

Both objectives are written in terms of the discriminator output ``D`` after
the change of variable ``T = r(D)``.  Per divergence we keep two score terms,
``a(D)`` scored on joint samples and ``b(D)`` scored on product (or all-class)
samples, so that::

    J_unsup(D) = E_{p_XY}[a(D)] - |T_x| E_{p_U p_Y}[b(D)]
    J_sup(D)   = E_{x,y}[a(D_x(y))] - E_y[sum_i b(D_i(y))]

``a`` and ``b`` equal ``r`` and ``f* o r`` up to additive constants, which are
dropped as in the usual printed forms (KL with softmax therefore differs from
cross-entropy by exactly 1).  Losses are ``-J``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fdivclass import nn
from fdivclass.divergences import DivergenceSpec, eval_f_star

EPS_D = 1e-6
EPS_SOFTMAX = 1e-300


@dataclass
class JointBatch:
    x_joint: np.ndarray
    y_joint: np.ndarray
    x_marginal: np.ndarray
    y_marginal: np.ndarray

    def __post_init__(self):
        self.x_joint = _as_2d(self.x_joint)
        self.y_joint = _as_2d(self.y_joint)
        self.x_marginal = _as_2d(self.x_marginal)
        self.y_marginal = _as_2d(self.y_marginal)
        sizes = {len(self.x_joint), len(self.y_joint), len(self.x_marginal), len(self.y_marginal)}
        if len(sizes) != 1:
            raise ValueError(f"joint batch blocks have different sizes: {sorted(sizes)}")

    @property
    def batch_size(self) -> int:
        return len(self.x_joint)

    def joint_inputs(self) -> np.ndarray:
        return np.hstack([self.x_joint, self.y_joint])

    def marginal_inputs(self) -> np.ndarray:
        return np.hstack([self.x_marginal, self.y_marginal])


@dataclass
class SupervisedBatch:
    y: np.ndarray
    labels: np.ndarray
    m: int

    def __post_init__(self):
        self.y = _as_2d(self.y)
        self.labels = np.asarray(self.labels, dtype=np.int64).ravel()
        if self.m < 2:
            raise ValueError("need at least two classes")
        if len(self.labels) != len(self.y):
            raise ValueError("labels and observations differ in length")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.m):
            raise ValueError(f"labels must lie in [0, {self.m})")


def _as_2d(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return a[:, None] if a.ndim == 1 else a


def activation_for(spec: DivergenceSpec) -> str:
    """Output activation matching the range of the optimal discriminator."""
    return spec.activation_kind


# ---------------------------------------------------------------- score terms


def change_of_variable(name: str, d):
    """``T = r(D)``."""
    if name == "kl":
        return np.log(d) + 1.0
    if name in ("rkl", "sl"):
        return -d
    if name == "hd":
        return 1.0 - np.sqrt(d)
    if name == "gan":
        return np.log1p(-d)
    if name == "p":
        return 2.0 * (d - 1.0)
    raise KeyError(name)


def first_term(name: str, d):
    """``a(D)`` and ``a'(D)``."""
    if name == "kl":
        return np.log(d), 1.0 / d
    if name in ("rkl", "sl"):
        return -d, -np.ones_like(d)
    if name == "hd":
        s = np.sqrt(d)
        return -s, -0.5 / s
    if name == "gan":
        return np.log1p(-d), -1.0 / (1.0 - d)
    if name == "p":
        return 2.0 * (d - 1.0), 2.0 * np.ones_like(d)
    raise KeyError(name)


def second_term(name: str, d):
    """``b(D)`` and ``b'(D)``."""
    if name == "kl":
        return d, np.ones_like(d)
    if name == "rkl":
        return -np.log(d), -1.0 / d
    if name == "hd":
        s = np.sqrt(d)
        return 1.0 / s, -0.5 / (d * s)
    if name == "gan":
        return -np.log(d), -1.0 / d
    if name == "p":
        return d * d, 2.0 * d
    if name == "sl":
        return d - np.log(d), 1.0 - 1.0 / d
    raise KeyError(name)


def bin_integrand(spec: DivergenceSpec, d, p_joint, p_prod):
    """Per-bin objective ``p_joint a(D) - p_prod b(D)``.

    ``p_prod`` is the product density already scaled by the support measure,
    ``|T_x| p_U p_Y`` (equal to ``p_Y``), so the optimum is ``k(p_joint / p_prod)``.
    """
    return p_joint * first_term(spec.name, d)[0] - p_prod * second_term(spec.name, d)[0]


def bin_integrand_derivative(spec: DivergenceSpec, d, p_joint, p_prod):
    return p_joint * first_term(spec.name, d)[1] - p_prod * second_term(spec.name, d)[1]


def clamp_d(spec: DivergenceSpec, d):
    """Clamp into the interior of the output domain; returns (clamped, pass-through mask)."""
    hi = 1.0 - EPS_D if spec.domain_D.high == 1.0 else np.inf
    c = np.clip(d, EPS_D, hi)
    return c, (d >= EPS_D) & (d <= hi)


# ------------------------------------------------------------- loss functions


def unsupervised_loss_from_d(spec: DivergenceSpec, d_joint, d_marginal):
    """``-J`` and its gradients with respect to the raw discriminator outputs."""
    d_joint = np.asarray(d_joint, dtype=float)
    d_marginal = np.asarray(d_marginal, dtype=float)
    n = d_joint.size
    if n == 0 or d_marginal.size == 0:
        raise ValueError("empty batch")
    tx = spec.tx_measure
    dj, mj = clamp_d(spec, d_joint)
    dm, mm = clamp_d(spec, d_marginal)
    a, da = first_term(spec.name, dj)
    b, db = second_term(spec.name, dm)
    loss = -np.mean(a) + tx * np.mean(b)
    if not np.isfinite(loss):
        raise nn.TrainingError(f"non-finite {spec.name} loss")
    g_joint = np.where(mj, -da / d_joint.size, 0.0)
    g_marg = np.where(mm, tx * db / d_marginal.size, 0.0)
    return float(loss), g_joint, g_marg


def supervised_loss_from_d(spec: DivergenceSpec, d, labels, softmax_output: bool = False):
    """``-J`` for an ``(n, m)`` block of outputs and its gradient."""
    d = np.asarray(d, dtype=float)
    labels = np.asarray(labels, dtype=np.int64)
    n, m = d.shape
    if n == 0:
        raise ValueError("empty batch")
    if labels.min() < 0 or labels.max() >= m:
        raise ValueError(f"label out of range [0, {m})")
    if softmax_output:
        dc = np.maximum(d, EPS_SOFTMAX)
        mask = d >= EPS_SOFTMAX
    else:
        dc, mask = clamp_d(spec, d)
    rows = np.arange(n)
    a, da = first_term(spec.name, dc[rows, labels])
    b, db = second_term(spec.name, dc)
    loss = -np.mean(a) + np.sum(b) / n
    if not np.isfinite(loss):
        raise nn.TrainingError(f"non-finite {spec.name} loss")
    g = db / n
    g[rows, labels] -= da / n
    return float(loss), np.where(mask, g, 0.0)


def cross_entropy_from_probs(probs, labels):
    """Standard cross-entropy ``-mean log p_label`` and its gradient in ``probs``."""
    probs = np.asarray(probs, dtype=float)
    n = len(probs)
    rows = np.arange(n)
    p = np.maximum(probs[rows, labels], EPS_SOFTMAX)
    g = np.zeros_like(probs)
    g[rows, labels] = -1.0 / (n * p)
    return float(-np.mean(np.log(p))), g


def _add(acc, grads):
    if acc is None:
        return [g.copy() for g in grads]
    for a, g in zip(acc, grads):
        a += g
    return acc


def unsupervised_objective(spec: DivergenceSpec, net: nn.DiscriminatorNet, batch: JointBatch, train_mode=True):
    """Loss ``-J_f`` and parameter gradients for an unsupervised discriminator."""
    if net.mode != "unsupervised":
        raise ValueError("unsupervised objective needs an unsupervised network")
    if batch.batch_size == 0:
        raise ValueError("empty batch")
    out_j, tape_j = nn.forward(net, batch.joint_inputs(), train_mode)
    out_m, tape_m = nn.forward(net, batch.marginal_inputs(), train_mode)
    loss, gj, gm = unsupervised_loss_from_d(spec, out_j, out_m)
    grads = _add(None, nn.backward(tape_j, gj))
    grads = _add(grads, nn.backward(tape_m, gm))
    return loss, grads


def supervised_objective(spec: DivergenceSpec, net: nn.DiscriminatorNet, batch: SupervisedBatch, train_mode=True):
    """Loss ``-J`` and parameter gradients for a supervised discriminator with m outputs."""
    if net.mode != "supervised" or net.n_out != batch.m:
        raise ValueError(f"supervised objective needs a supervised network with {batch.m} outputs")
    out, tape = nn.forward(net, batch.y, train_mode)
    softmax = net.layers[-1].activation == "softmax"
    loss, g = supervised_loss_from_d(spec, out, batch.labels, softmax_output=softmax)
    return loss, nn.backward(tape, g)


def cross_entropy_objective(net: nn.DiscriminatorNet, batch: SupervisedBatch, train_mode=True):
    if net.layers[-1].activation != "softmax":
        raise ValueError("cross-entropy baseline needs a softmax output layer")
    out, tape = nn.forward(net, batch.y, train_mode)
    loss, g = cross_entropy_from_probs(out, batch.labels)
    return loss, nn.backward(tape, g)


# ---------------------------------------------------------------- sampling


def box_bounds(support_box):
    box = np.asarray(support_box, dtype=float)
    if box.ndim == 1:
        box = box[None, :]
    if box.shape[1] != 2:
        raise ValueError("support box must be (low, high) or a sequence of such pairs")
    return box[:, 0], box[:, 1]


def box_measure(support_box) -> float:
    lo, hi = box_bounds(support_box)
    widths = hi - lo
    if np.any(~(widths > 0)):
        raise ValueError(f"degenerate support box {support_box!r}")
    return float(np.prod(widths))


def marginal_resample(x_joint, y_joint, support_box, rng) -> JointBatch:
    """Pair joint samples with uniform-box x and a permutation of y."""
    box_measure(support_box)
    lo, hi = box_bounds(support_box)
    x_joint = _as_2d(x_joint)
    y_joint = _as_2d(y_joint)
    n = len(x_joint)
    x_marg = rng.uniform(lo, hi, size=(n, len(lo)))
    y_marg = y_joint[rng.permutation(n)]
    return JointBatch(x_joint, y_joint, x_marg, y_marg)


# ------------------------------------------------------ discrete toy objective


def variational_value(spec: DivergenceSpec, d, p_joint, p_marginal, normalized: bool = True) -> float:
    """``sum p_XY r(D) - sum p_U p_Y f_u*(r(D))`` on a fully discrete joint table.

    ``p_marginal`` is the (unscaled) product ``p_U p_Y``; ``spec.tx_measure``
    must equal the alphabet size of X.  With ``normalized=True`` the conjugate
    of the generator with ``f(1) = 0`` is used, so the maximum equals the
    f-divergence between the joint and the product.
    """
    t = change_of_variable(spec.name, np.asarray(d, dtype=float))
    fstar = eval_f_star(spec, t, supervised=False, normalized=normalized)
    return float(np.sum(p_joint * t) - np.sum(p_marginal * fstar))
