"""Decoding over simulated channels: PAM and binary-vector AWGN.

Three channel families are provided:

* ``pam4_nonlinear``: 4-PAM, ``y = sgn(x) sqrt(|x|) + n``, uniform prior.
* ``pam4_nonuniform``: 4-PAM over a linear AWGN channel with prior
  ``[P/2, P/2, (1-P)/2, (1-P)/2]``.
* ``awgn_vector``: ``d``-dimensional bipolar codewords (``2**d`` symbols) in AWGN.

Amplitudes are ``{-3, -1, 1, 3}`` scaled to unit average power and the SNR is
``E[x^2] / sigma^2`` with the expectation under the prior.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from fdivclass import nn
from fdivclass.divergences import DivergenceSpec
from fdivclass.io import substream
from fdivclass.posterior import map_classify, posterior_from_d
from fdivclass.training import NetConfig, TrainConfig, train_supervised

KINDS = ("pam4_nonlinear", "pam4_nonuniform", "awgn_vector")
PAM4 = np.array([-3.0, -1.0, 1.0, 3.0]) / np.sqrt(5.0)


def pam_nonlinearity(x):
    return np.sign(x) * np.sqrt(np.abs(x))


@dataclass(frozen=True)
class ChannelModel:
    kind: str
    constellation: np.ndarray
    prior: np.ndarray
    snr_db: float
    nonlinear: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown channel kind {self.kind!r}")
        c = np.asarray(self.constellation, dtype=float)
        if c.ndim == 1:
            c = c[:, None]
        prior = np.asarray(self.prior, dtype=float)
        if prior.shape != (len(c),) or np.any(prior < 0) or abs(prior.sum() - 1.0) > 1e-12:
            raise ValueError("prior must be a probability vector over the constellation")
        if len(np.unique(c, axis=0)) != len(c):
            raise ValueError("constellation points must be distinct")
        object.__setattr__(self, "constellation", c)
        object.__setattr__(self, "prior", prior)

    @classmethod
    def pam4_nonlinear(cls, snr_db: float) -> "ChannelModel":
        return cls("pam4_nonlinear", PAM4, np.full(4, 0.25), snr_db, nonlinear=True)

    @classmethod
    def pam4_nonuniform(cls, snr_db: float, p: float = 0.05, nonlinear: bool = False) -> "ChannelModel":
        prior = np.array([p / 2, p / 2, (1 - p) / 2, (1 - p) / 2])
        return cls("pam4_nonuniform", PAM4, prior, snr_db, nonlinear=nonlinear)

    @classmethod
    def awgn_vector(cls, snr_db: float, d: int = 6) -> "ChannelModel":
        codewords = np.array(list(itertools.product((-1.0, 1.0), repeat=d)))
        m = len(codewords)
        return cls("awgn_vector", codewords, np.full(m, 1.0 / m), snr_db)

    def with_snr(self, snr_db: float) -> "ChannelModel":
        return replace(self, snr_db=float(snr_db))

    @property
    def m(self) -> int:
        return len(self.constellation)

    @property
    def dim(self) -> int:
        return self.constellation.shape[1]

    @property
    def signal_power(self) -> float:
        """Prior-weighted mean energy per dimension of the transmitted symbol."""
        return float(self.prior @ np.mean(self.constellation**2, axis=1))

    @property
    def noise_sigma(self) -> float:
        return float(np.sqrt(self.signal_power / 10.0 ** (self.snr_db / 10.0)))

    @property
    def images(self) -> np.ndarray:
        """Noise-free channel outputs, one row per symbol."""
        return pam_nonlinearity(self.constellation) if self.nonlinear else self.constellation


def sample_symbols(model: ChannelModel, n: int, rng) -> np.ndarray:
    return rng.choice(model.m, size=n, p=model.prior)


def transmit(model: ChannelModel, symbols, rng, sigma: float | None = None) -> np.ndarray:
    """Channel outputs ``(n, dim)`` for symbol indices; ``sigma`` overrides the SNR."""
    symbols = np.asarray(symbols)
    if symbols.size and (symbols.min() < 0 or symbols.max() >= model.m
                         or not np.issubdtype(symbols.dtype, np.integer)):
        raise IndexError(f"symbol indices must be integers in [0, {model.m})")
    s = model.noise_sigma if sigma is None else sigma
    clean = model.images[symbols]
    return clean + s * rng.standard_normal(clean.shape)


def _log_likelihood(model: ChannelModel, obs) -> np.ndarray:
    obs = np.asarray(obs, dtype=float)
    if obs.ndim == 1:
        obs = obs[:, None]
    img = model.images
    # squared distances via the expansion keeps memory at (n, m)
    d2 = (obs**2).sum(1)[:, None] - 2.0 * obs @ img.T + (img**2).sum(1)[None, :]
    return -d2 / (2.0 * model.noise_sigma**2)


def analytic_posterior(model: ChannelModel, obs) -> np.ndarray:
    """Exact ``p(x_i | y)`` rows."""
    with np.errstate(divide="ignore"):
        logp = _log_likelihood(model, obs) + np.log(model.prior)[None, :]
    return np.exp(logp - logsumexp(logp, axis=1, keepdims=True))


def map_genie_decode(model: ChannelModel, obs) -> np.ndarray:
    with np.errstate(divide="ignore"):
        score = _log_likelihood(model, obs) + np.log(model.prior)[None, :]
    return map_classify(score)


def maxl_decode(model: ChannelModel, obs) -> np.ndarray:
    return map_classify(_log_likelihood(model, obs))


def mismatched_maxl_decode(model: ChannelModel, obs) -> np.ndarray:
    """Maximum likelihood assuming a linear channel (unaware of the nonlinearity)."""
    return maxl_decode(replace(model, nonlinear=False), obs)


# -------------------------------------------------------------- neural decoder


def build_decoder_net(model: ChannelModel, spec: DivergenceSpec | None, net_cfg: NetConfig, seed: int):
    """Supervised net with one output per symbol; ``spec=None`` gives a softmax net."""
    out_act = "softmax" if spec is None else spec.activation_kind
    sizes = [model.dim, *net_cfg.hidden, model.m]
    return nn.DiscriminatorNet.build(
        sizes, output_activation=out_act, hidden_activation=net_cfg.hidden_activation,
        mode="supervised", dropout=net_cfg.dropout, seed=seed,
    )


def channel_sampler(model: ChannelModel):
    def draw(rng, n):
        sym = sample_symbols(model, n, rng)
        return transmit(model, sym, rng), sym

    return draw


def train_neural_decoder(
    model: ChannelModel,
    spec: DivergenceSpec | None,
    net_cfg: NetConfig | None = None,
    train_cfg: TrainConfig | None = None,
    seed: int = 0,
) -> nn.DiscriminatorNet:
    """Train a supervised decoder on freshly generated channel samples."""
    net_cfg = net_cfg or NetConfig()
    train_cfg = train_cfg or TrainConfig()
    name = "ce" if spec is None else spec.name
    net = build_decoder_net(model, spec, net_cfg, seed=int(substream(seed, "init", name).integers(2**31)))
    rng = substream(seed, "train", name, model.kind, repr(float(model.snr_db)))
    return train_supervised(spec, net, channel_sampler(model), train_cfg, rng).net


def decoder_posteriors(net: nn.DiscriminatorNet, spec: DivergenceSpec | None, obs, chunk: int = 200_000):
    """Posterior estimates per symbol from a trained decoder's outputs."""
    obs = np.asarray(obs, dtype=float)
    if obs.ndim == 1:
        obs = obs[:, None]
    out = []
    for start in range(0, len(obs), chunk):
        d = net(obs[start:start + chunk])
        if spec is None:
            out.append(d)
        else:
            lo = spec.domain_D.low
            hi = spec.domain_D.high
            eps = 1e-12
            d = np.clip(d, lo + eps, hi - eps if np.isfinite(hi) else np.inf)
            out.append(posterior_from_d(spec, d))
    return np.vstack(out)


def neural_decode(net, spec, obs) -> np.ndarray:
    return map_classify(decoder_posteriors(net, spec, obs))


# ------------------------------------------------------------------ SNR sweep

Decoder = Callable[[ChannelModel, np.ndarray], np.ndarray]


@dataclass
class SerCurve:
    snr_points: np.ndarray
    ser: dict = field(default_factory=dict)
    n_symbols: int = 0
    seed: int = 0

    def __post_init__(self):
        self.snr_points = np.asarray(self.snr_points, dtype=float)
        for name, v in self.ser.items():
            v = np.asarray(v, dtype=float)
            if v.shape != self.snr_points.shape or np.any((v < 0) | (v > 1)):
                raise ValueError(f"bad SER vector for {name!r}")
            self.ser[name] = v

    def stderr(self, name: str) -> np.ndarray:
        s = self.ser[name]
        return np.sqrt(s * (1.0 - s) / self.n_symbols)

    def rows(self):
        """``(snr_db, decoder, ser, stderr, n_symbols, seed)`` rows, SNR-major."""
        for i, snr in enumerate(self.snr_points):
            for name in self.ser:
                yield (float(snr), name, float(self.ser[name][i]),
                       float(self.stderr(name)[i]), self.n_symbols, self.seed)


CSV_HEADER = ("snr_db", "decoder", "ser", "stderr", "n_symbols", "seed")


def snr_sweep(model: ChannelModel, decoders: dict, snr_list, n_symbols: int, seed: int) -> SerCurve:
    """SER of each decoder at each SNR, all decoders seeing the same test symbols.

    ``decoders`` maps a name to ``decode(model_at_snr, observations)``.  Each SNR
    point draws from its own substream keyed by (seed, point index).
    """
    if n_symbols < 1:
        raise ValueError("n_symbols must be positive")
    snr_list = np.asarray(list(snr_list), dtype=float)
    ser = {name: np.zeros(len(snr_list)) for name in decoders}
    for i, snr in enumerate(snr_list):
        m = model.with_snr(snr)
        rng = substream(seed, "test", model.kind, i)
        sym = sample_symbols(m, n_symbols, rng)
        obs = transmit(m, sym, rng)
        for name, decode in decoders.items():
            ser[name][i] = float(np.mean(decode(m, obs) != sym))
    return SerCurve(snr_list, ser, n_symbols, seed)


def parse_snr_range(text: str) -> np.ndarray:
    """``"0:2:16"`` -> ``[0, 2, ..., 16]``; a comma list is also accepted."""
    if ":" in text:
        parts = [float(p) for p in text.split(":")]
        if len(parts) != 3 or parts[1] <= 0:
            raise ValueError(f"SNR range must be start:step:stop, got {text!r}")
        start, step, stop = parts
        n = int(np.floor((stop - start) / step + 1e-9)) + 1
        return start + step * np.arange(n)
    return np.array([float(p) for p in text.split(",")])


def neural_decoder(spec: DivergenceSpec | None, net_cfg: NetConfig | None = None,
                   train_cfg: TrainConfig | None = None, seed: int = 0) -> Decoder:
    """Decoder for :func:`snr_sweep` that trains one network per SNR point on first use."""
    trained = {}

    def decode(model: ChannelModel, obs):
        key = (model.kind, model.snr_db)
        if key not in trained:
            trained[key] = train_neural_decoder(model, spec, net_cfg, train_cfg, seed)
        return neural_decode(trained[key], spec, obs)

    decode.trained = trained
    return decode


def make_channel(name: str, snr_db: float = 0.0, **kwargs) -> ChannelModel:
    """CLI channel names: ``pam4``, ``pam4-nonuniform`` and ``awgn``."""
    if name == "pam4":
        return ChannelModel.pam4_nonlinear(snr_db)
    if name == "pam4-nonuniform":
        return ChannelModel.pam4_nonuniform(snr_db, **kwargs)
    if name == "awgn":
        return ChannelModel.awgn_vector(snr_db, **kwargs)
    raise ValueError(f"unknown channel {name!r}")


BASELINES = {
    "map": map_genie_decode,
    "maxl": maxl_decode,
    "maxl-linear": mismatched_maxl_decode,
}
