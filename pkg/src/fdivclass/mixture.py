"""Three-class 2-D Gaussian mixture classification with an exact Bayes oracle."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp
from scipy.stats import multivariate_normal

from fdivclass import nn
from fdivclass.divergences import DivergenceSpec, get_spec
from fdivclass.io import substream
from fdivclass.posterior import map_classify, posterior_from_d
from fdivclass.training import NetConfig, TrainConfig, train_supervised


@dataclass
class GaussianMixture:
    means: np.ndarray
    covariances: np.ndarray
    priors: np.ndarray

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=float)
        self.covariances = np.asarray(self.covariances, dtype=float)
        self.priors = np.asarray(self.priors, dtype=float)
        k, d = self.means.shape
        if self.covariances.shape != (k, d, d) or self.priors.shape != (k,):
            raise ValueError("means, covariances and priors disagree on class count or dimension")
        if np.any(self.priors < 0) or abs(self.priors.sum() - 1.0) > 1e-12:
            raise ValueError("priors must be a probability vector")
        for c in self.covariances:
            np.linalg.cholesky(c)

    @classmethod
    def default(cls) -> "GaussianMixture":
        means = [[0.0, 0.0], [2.0, 0.5], [0.8, 2.0]]
        covs = [[[1.0, 0.3], [0.3, 0.8]], [[0.7, -0.2], [-0.2, 1.0]], [[0.9, 0.0], [0.0, 0.6]]]
        return cls(means, covs, [0.3, 0.3, 0.4])

    @classmethod
    def single_class(cls) -> "GaussianMixture":
        base = cls.default()
        return cls(base.means, base.covariances, [1.0, 0.0, 0.0])

    @property
    def n_classes(self) -> int:
        return len(self.priors)

    def sample(self, rng, n: int):
        labels = rng.choice(self.n_classes, size=n, p=self.priors)
        chol = np.linalg.cholesky(self.covariances)
        z = rng.standard_normal((n, self.means.shape[1]))
        x = self.means[labels] + np.einsum("nij,nj->ni", chol[labels], z)
        return x, labels

    def log_joint(self, x) -> np.ndarray:
        """``log prior_i + log N(x; mean_i, cov_i)``, one column per class."""
        cols = []
        for mu, cov, p in zip(self.means, self.covariances, self.priors):
            lp = np.log(p) if p > 0 else -np.inf
            cols.append(lp + multivariate_normal(mu, cov).logpdf(x))
        return np.column_stack(cols)

    def posterior(self, x) -> np.ndarray:
        lj = self.log_joint(x)
        return np.exp(lj - logsumexp(lj, axis=1, keepdims=True))

    def bayes_classify(self, x) -> np.ndarray:
        return map_classify(self.posterior(x))

    def bayes_rate_mc(self, rng, n: int = 1_000_000) -> float:
        """Monte-Carlo Bayes accuracy ``E[max_i p(i | x)]``."""
        x, _ = self.sample(rng, n)
        return float(np.mean(self.posterior(x).max(axis=1)))


@dataclass
class MixtureResult:
    bayes_accuracy: float
    accuracy: dict = field(default_factory=dict)
    n_test: int = 0
    seed: int = 0

    def rows(self):
        """``(decoder, accuracy, stderr, n_test, seed)`` rows, Bayes first."""
        items = [("bayes", self.bayes_accuracy), *self.accuracy.items()]
        for name, acc in items:
            se = float(np.sqrt(acc * (1.0 - acc) / self.n_test))
            yield name, float(acc), se, self.n_test, self.seed


CSV_HEADER = ("decoder", "accuracy", "stderr", "n_test", "seed")
DEFAULT_MIXTURE_TRAIN = TrainConfig(steps=3000, batch_size=256, lr=1e-3, final_lr_frac=0.1)


def net_posteriors(net: nn.DiscriminatorNet, spec: DivergenceSpec | None, x) -> np.ndarray:
    d = net(x)
    if spec is None:
        return d
    lo, hi = spec.domain_D.low, spec.domain_D.high
    d = np.clip(d, lo + 1e-12, hi - 1e-12 if np.isfinite(hi) else np.inf)
    return posterior_from_d(spec, d)


def train_classifier(mixture: GaussianMixture, name: str, net_cfg: NetConfig, train_cfg: TrainConfig, seed: int):
    """``name`` is a divergence or ``"ce"`` for the cross-entropy baseline."""
    spec = None if name == "ce" else get_spec(name)
    out_act = "softmax" if spec is None else spec.activation_kind
    net = nn.DiscriminatorNet.build(
        [mixture.means.shape[1], *net_cfg.hidden, mixture.n_classes], output_activation=out_act,
        hidden_activation=net_cfg.hidden_activation, mode="supervised", dropout=net_cfg.dropout,
        seed=int(substream(seed, "mixture-init", name).integers(2**31)),
    )
    rng = substream(seed, "mixture-train", name)
    train_supervised(spec, net, mixture.sample, train_cfg, rng)
    return net, spec


def mixture_bench(
    names,
    mixture: GaussianMixture | None = None,
    n_test: int = 100_000,
    seed: int = 0,
    net_cfg: NetConfig | None = None,
    train_cfg: TrainConfig | None = None,
) -> MixtureResult:
    """Test accuracy of each trained classifier next to the exact Bayes classifier."""
    mixture = mixture or GaussianMixture.default()
    net_cfg = net_cfg or NetConfig()
    train_cfg = train_cfg or DEFAULT_MIXTURE_TRAIN
    x, labels = mixture.sample(substream(seed, "mixture-test"), n_test)
    result = MixtureResult(float(np.mean(mixture.bayes_classify(x) == labels)), n_test=n_test, seed=seed)
    for name in names:
        net, spec = train_classifier(mixture, name, net_cfg, train_cfg, seed)
        pred = map_classify(net_posteriors(net, spec, x))
        result.accuracy[name] = float(np.mean(pred == labels))
    return result
