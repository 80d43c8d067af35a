"""Continuous posterior estimation on ``Y = X + N`` toys with closed-form answers.

Two tasks: X and N independent exponentials (rate ``lam``), and X and N
independent zero-mean Gaussians.  X is restricted to ``support_box`` by
rejection, and the uniform reference ``p_U`` lives on the same box, so
``|T_x|`` is the box length.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from fdivclass import nn
from fdivclass.divergences import DivergenceSpec, get_spec
from fdivclass.io import substream
from fdivclass.objectives import box_measure
from fdivclass.posterior import posterior_from_d
from fdivclass.training import NetConfig, TrainConfig, train_unsupervised

TASKS = ("exponential", "gaussian")


@dataclass
class ToyTaskConfig:
    kind: str = "gaussian"
    lam: float = 1.0
    sigma_x: float = 1.0
    sigma_n: float = 1.0
    support_box: tuple | None = None
    x_grid: tuple = (None, None, 50)
    y_grid: tuple = (None, None, 50)
    n_train: int = 256
    seed: int = 0

    def __post_init__(self):
        if self.kind not in TASKS:
            raise ValueError(f"unknown toy task {self.kind!r}")
        if not (self.lam > 0 and self.sigma_x > 0 and self.sigma_n > 0):
            raise ValueError("rates and standard deviations must be positive")
        if self.n_train < 1:
            raise ValueError("n_train must be at least 1")
        if self.kind == "exponential":
            # 99.9th percentile of the exponential prior
            box = self.support_box or (0.0, math.log(1000.0) / self.lam)
            xg, yg = (0.0, 4.0), (0.2, 4.0)
        else:
            box = self.support_box or (-4.0 * self.sigma_x, 4.0 * self.sigma_x)
            xg = yg = (-3.0, 3.0)
        self.support_box = tuple(float(v) for v in box)
        box_measure(self.support_box)
        self.x_grid = _fill_grid(self.x_grid, xg)
        self.y_grid = _fill_grid(self.y_grid, yg)
        if self.kind == "exponential" and self.y_grid[0] <= 0:
            raise ValueError("exponential grid needs y > 0")

    @property
    def tx_measure(self) -> float:
        return box_measure(self.support_box)

    def axes(self):
        return np.linspace(*self.x_grid), np.linspace(*self.y_grid)


def _fill_grid(grid, default):
    lo, hi, n = grid
    lo = default[0] if lo is None else lo
    hi = default[1] if hi is None else hi
    if not hi > lo or int(n) < 2:
        raise ValueError(f"bad grid {grid!r}")
    return float(lo), float(hi), int(n)


def _draw_x(config: ToyTaskConfig, rng, n: int) -> np.ndarray:
    lo, hi = config.support_box
    out = np.empty(0)
    while len(out) < n:
        k = max(2 * (n - len(out)), 16)
        if config.kind == "exponential":
            x = rng.exponential(1.0 / config.lam, size=k)
        else:
            x = config.sigma_x * rng.standard_normal(k)
        out = np.concatenate([out, x[(x >= lo) & (x <= hi)]])
    return out[:n]


def sample_task(config: ToyTaskConfig, rng, n: int | None = None):
    """Joint ``(x, y)`` samples as two ``(n, 1)`` arrays."""
    n = config.n_train if n is None else n
    x = _draw_x(config, rng, n)
    if config.kind == "exponential":
        noise = rng.exponential(1.0 / config.lam, size=n)
    else:
        noise = config.sigma_n * rng.standard_normal(n)
    return x[:, None], (x + noise)[:, None]


def exp_posterior_closed(x, y):
    """``1/y`` for ``0 < x < y``, zero elsewhere (independent of the rate)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise ValueError("exponential posterior needs y > 0")
    out = np.where((x > 0) & (x < y), 1.0 / y, 0.0)
    return float(out) if out.ndim == 0 else out


def gauss_posterior_closed(x, y, sigma_x: float = 1.0, sigma_n: float = 1.0):
    """Gaussian posterior density of X at ``x`` given ``Y = y``.

    ``N(y / k, sigma_n^2 / k)`` with ``k = (sigma_x^2 + sigma_n^2) / sigma_x^2``.
    """
    if not (sigma_x > 0 and sigma_n > 0):
        raise ValueError("standard deviations must be positive")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    var_y = sigma_x**2 + sigma_n**2
    k = var_y / sigma_x**2
    scale = math.sqrt(var_y / (sigma_n**2 * sigma_x**2)) / math.sqrt(2.0 * math.pi)
    out = scale * np.exp(-k * (x - y / k) ** 2 / (2.0 * sigma_n**2))
    return float(out) if out.ndim == 0 else out


def oracle(config: ToyTaskConfig, x, y):
    if config.kind == "exponential":
        return exp_posterior_closed(x, y)
    return gauss_posterior_closed(x, y, config.sigma_x, config.sigma_n)


@dataclass
class PosteriorGrid:
    x_axis: np.ndarray
    y_axis: np.ndarray
    estimate: np.ndarray
    oracle: np.ndarray
    mask: np.ndarray
    mse: float = field(init=False)

    def __post_init__(self):
        shape = (len(self.x_axis), len(self.y_axis))
        if self.estimate.shape != shape or self.oracle.shape != shape or self.mask.shape != shape:
            raise ValueError("grid matrices must be (len(x_axis), len(y_axis))")
        if np.any(self.estimate < 0):
            raise ValueError("posterior estimates must be nonnegative")
        self.mse = float(np.mean((self.estimate - self.oracle)[self.mask] ** 2))

    def rows(self):
        """``(x, y, estimate, oracle)`` rows, x-major."""
        for i, xv in enumerate(self.x_axis):
            for j, yv in enumerate(self.y_axis):
                yield float(xv), float(yv), float(self.estimate[i, j]), float(self.oracle[i, j])


CSV_HEADER = ("x", "y", "estimate", "oracle")


def grid_from_estimator(config: ToyTaskConfig, estimator) -> PosteriorGrid:
    """Tabulate ``estimator(x, y)`` (flat arrays in, flat array out) against the oracle."""
    xs, ys = config.axes()
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    est = np.asarray(estimator(gx.ravel(), gy.ravel()), dtype=float).reshape(gx.shape)
    orc = oracle(config, gx, gy)
    # the exponential oracle vanishes off 0 < x < y; score only inside
    mask = orc > 0 if config.kind == "exponential" else np.ones_like(orc, dtype=bool)
    return PosteriorGrid(xs, ys, est, orc, mask)


def net_estimator(net: nn.DiscriminatorNet, spec: DivergenceSpec):
    def estimate(x, y):
        d = net(np.column_stack([x, y])).ravel()
        lo, hi = spec.domain_D.low, spec.domain_D.high
        d = np.clip(d, lo + 1e-12, hi - 1e-12 if np.isfinite(hi) else np.inf)
        return posterior_from_d(spec, d)

    return estimate


def build_toy_net(spec: DivergenceSpec, net_cfg: NetConfig, seed: int) -> nn.DiscriminatorNet:
    return nn.DiscriminatorNet.build(
        [2, *net_cfg.hidden, 1], output_activation=spec.activation_kind,
        hidden_activation=net_cfg.hidden_activation, mode="unsupervised",
        dropout=net_cfg.dropout, seed=seed,
    )


def toy_spec(name: str, config: ToyTaskConfig) -> DivergenceSpec:
    return get_spec(name, tx_measure=config.tx_measure)


DEFAULT_TOY_TRAIN = TrainConfig(steps=4000, batch_size=512, lr=1e-3, final_lr_frac=0.05)


def fit_and_grid(
    config: ToyTaskConfig,
    spec: DivergenceSpec | str,
    net_cfg: NetConfig | None = None,
    train_cfg: TrainConfig | None = None,
) -> PosteriorGrid:
    """Train an unsupervised discriminator on the task and tabulate its posterior."""
    if isinstance(spec, str):
        spec = toy_spec(spec, config)
    if not math.isclose(spec.tx_measure, config.tx_measure, rel_tol=1e-12):
        raise ValueError(f"spec |T_x| = {spec.tx_measure} differs from the box measure {config.tx_measure}")
    net_cfg = net_cfg or NetConfig()
    train_cfg = train_cfg or DEFAULT_TOY_TRAIN
    net = build_toy_net(spec, net_cfg, int(substream(config.seed, "toy-init", spec.name).integers(2**31)))
    rng = substream(config.seed, "toy-train", config.kind, spec.name)
    train_unsupervised(spec, net, lambda r, n: sample_task(config, r, n), config.support_box, train_cfg, rng)
    return grid_from_estimator(config, net_estimator(net, spec))
