"""Minibatch training loops for supervised and unsupervised discriminators."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from fdivclass import nn
from fdivclass.divergences import DivergenceSpec
from fdivclass.objectives import (
    JointBatch,
    SupervisedBatch,
    cross_entropy_objective,
    marginal_resample,
    supervised_objective,
    unsupervised_objective,
)


@dataclass
class TrainConfig:
    steps: int = 3000
    batch_size: int = 256
    lr: float = 1e-3
    optimizer: str = "adam"
    # linear decay of the learning rate to lr * final_lr_frac over the run
    final_lr_frac: float = 1.0

    def __post_init__(self):
        if self.steps < 1 or self.batch_size < 1:
            raise ValueError("steps and batch_size must be positive")
        if not self.lr > 0:
            raise ValueError("lr must be positive")


@dataclass
class NetConfig:
    hidden: tuple = (100, 100)
    hidden_activation: str = "leaky_relu"
    dropout: float = 0.0


@dataclass
class TrainResult:
    net: nn.DiscriminatorNet
    losses: list = field(default_factory=list)


def _lr_at(cfg: TrainConfig, step: int) -> float:
    frac = step / max(cfg.steps - 1, 1)
    return cfg.lr * (1.0 - (1.0 - cfg.final_lr_frac) * frac)


def _run(net, cfg: TrainConfig, loss_and_grads: Callable[[int], tuple]) -> TrainResult:
    opt = nn.make_optimizer(cfg.optimizer, net.params, lr=cfg.lr)
    losses = []
    for step in range(cfg.steps):
        opt.lr = _lr_at(cfg, step)
        loss, grads = loss_and_grads(step)
        if not np.isfinite(loss):
            raise nn.TrainingError(f"non-finite loss at step {step}")
        nn.apply_step(net, opt, grads)
        losses.append(loss)
    return TrainResult(net, losses)


def train_supervised(
    spec: DivergenceSpec | None,
    net: nn.DiscriminatorNet,
    sampler: Callable[[np.random.Generator, int], tuple],
    cfg: TrainConfig,
    rng: np.random.Generator,
) -> TrainResult:
    """Train on fresh ``(observations, labels) = sampler(rng, batch_size)`` draws.

    ``spec=None`` trains with plain cross-entropy (softmax output required).
    """
    m = net.n_out

    def step(_):
        y, labels = sampler(rng, cfg.batch_size)
        batch = SupervisedBatch(y, labels, m)
        if spec is None:
            return cross_entropy_objective(net, batch)
        return supervised_objective(spec, net, batch)

    return _run(net, cfg, step)


def train_unsupervised(
    spec: DivergenceSpec,
    net: nn.DiscriminatorNet,
    sampler: Callable[[np.random.Generator, int], tuple],
    support_box,
    cfg: TrainConfig,
    rng: np.random.Generator,
) -> TrainResult:
    """Train on fresh joint ``(x, y) = sampler(rng, batch_size)`` draws.

    The product samples pair uniform-box ``x`` with a shuffle of the batch's ``y``.
    """

    def step(_):
        x, y = sampler(rng, cfg.batch_size)
        batch: JointBatch = marginal_resample(x, y, support_box, rng)
        return unsupervised_objective(spec, net, batch)

    return _run(net, cfg, step)
