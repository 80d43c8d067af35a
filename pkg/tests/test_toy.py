import math

import numpy as np
import pytest
from scipy import integrate, stats

from fdivclass.divergences import NAMES
from fdivclass.io import substream
from fdivclass.posterior import posterior_from_d
from fdivclass.toy import (
    ToyTaskConfig,
    build_toy_net,
    exp_posterior_closed,
    fit_and_grid,
    gauss_posterior_closed,
    grid_from_estimator,
    net_estimator,
    sample_task,
    toy_spec,
)
from fdivclass.training import NetConfig, TrainConfig

# N(0, 1/2) density at 0 and N(1/4, 1/2) at 1 (mpmath)
GAUSS_00 = 0.564189583547756286948079451561
GAUSS_1_HALF = 0.321465534597603664526738457182

SHORT = TrainConfig(steps=300, batch_size=256, lr=1e-3, final_lr_frac=0.05)


class TestSampling:
    def test_gaussian_output_variance(self):
        _, y = sample_task(ToyTaskConfig("gaussian", support_box=(-50.0, 50.0)), np.random.default_rng(0), 1_000_000)
        assert y.var() == pytest.approx(2.0, rel=0.01)

    def test_exponential_ordering(self):
        x, y = sample_task(ToyTaskConfig("exponential"), np.random.default_rng(1), 100_000)
        assert np.all(x >= 0) and np.all(y >= x)

    def test_respects_box(self):
        cfg = ToyTaskConfig("exponential")
        x, _ = sample_task(cfg, np.random.default_rng(2), 50_000)
        assert x.max() <= cfg.support_box[1]

    def test_deterministic(self):
        cfg = ToyTaskConfig("gaussian")
        a = sample_task(cfg, np.random.default_rng(3), 100)
        b = sample_task(cfg, np.random.default_rng(3), 100)
        np.testing.assert_array_equal(a[1], b[1])

    def test_box_measure(self):
        assert ToyTaskConfig("exponential").tx_measure == pytest.approx(math.log(1000.0))
        assert ToyTaskConfig("gaussian").tx_measure == 8.0

    @pytest.mark.parametrize("kwargs", [{"kind": "uniform"}, {"lam": 0.0}, {"n_train": 0},
                                        {"kind": "exponential", "y_grid": (0.0, 4.0, 10)}, {"x_grid": (1.0, 1.0, 5)}])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            ToyTaskConfig(**kwargs)


class TestOracles:
    @pytest.mark.parametrize("x,y,expected", [(0.5, 2.0, 0.5), (2.5, 2.0, 0.0), (-0.1, 2.0, 0.0)])
    def test_exponential_values(self, x, y, expected):
        assert exp_posterior_closed(x, y) == expected

    def test_exponential_needs_positive_y(self):
        with pytest.raises(ValueError):
            exp_posterior_closed(0.5, 0.0)

    @pytest.mark.parametrize("y", [0.3, 2.0, 7.5])
    def test_exponential_normalised(self, y):
        total, _ = integrate.quad(lambda x: exp_posterior_closed(x, y), 0.0, y)
        assert total == pytest.approx(1.0, abs=1e-4)

    def test_gaussian_values(self):
        assert gauss_posterior_closed(0.0, 0.0) == pytest.approx(GAUSS_00, rel=1e-14)
        assert gauss_posterior_closed(1.0, 0.5) == pytest.approx(GAUSS_1_HALF, rel=1e-14)

    @pytest.mark.parametrize("y,sx,sn", [(0.0, 1.0, 1.0), (1.3, 0.5, 2.0), (-2.0, 2.0, 0.3)])
    def test_gaussian_normalised(self, y, sx, sn):
        total, _ = integrate.quad(lambda x: gauss_posterior_closed(x, y, sx, sn), -np.inf, np.inf)
        assert total == pytest.approx(1.0, abs=1e-4)

    def test_gaussian_matches_bayes_rule(self):
        # p(x|y) = p(x) p(y|x) / p(y) evaluated with scipy densities
        sx, sn = 0.8, 1.5
        x = np.linspace(-3, 3, 13)
        y = 0.7
        bayes = stats.norm.pdf(x, 0, sx) * stats.norm.pdf(y, x, sn) / stats.norm.pdf(y, 0, math.hypot(sx, sn))
        np.testing.assert_allclose(gauss_posterior_closed(x, y, sx, sn), bayes, rtol=1e-12)

    def test_gaussian_symmetry(self):
        x, y = np.meshgrid(np.linspace(-2, 2, 9), np.linspace(-2, 2, 9))
        np.testing.assert_allclose(gauss_posterior_closed(x, y), gauss_posterior_closed(-x, -y))


class TestGrid:
    def test_constant_output_baseline(self):
        cfg = ToyTaskConfig("gaussian", x_grid=(-3.0, 3.0, 21), y_grid=(-3.0, 3.0, 21))
        spec = toy_spec("kl", cfg)
        net = build_toy_net(spec, NetConfig((8,)), seed=0)
        net.layers[-1].weights[:] = 0.0
        net.layers[-1].biases[:] = 0.3
        grid = grid_from_estimator(cfg, net_estimator(net, spec))
        c = posterior_from_d(spec, math.log1p(math.exp(0.3)))
        x, y = np.meshgrid(np.linspace(-3, 3, 21), np.linspace(-3, 3, 21), indexing="ij")
        expected = np.mean((c - stats.norm.pdf(x, y / 2, math.sqrt(0.5))) ** 2)
        assert grid.mse == pytest.approx(expected, rel=1e-12)

    def test_exponential_mask(self):
        cfg = ToyTaskConfig("exponential", x_grid=(0.0, 4.0, 5), y_grid=(1.0, 4.0, 4))
        grid = grid_from_estimator(cfg, lambda x, y: np.zeros_like(x))
        # scored cells: 0 < x < y; error there is (1/y)^2
        x, y = np.meshgrid(grid.x_axis, grid.y_axis, indexing="ij")
        inside = (x > 0) & (x < y)
        assert grid.mse == pytest.approx(np.mean((1 / y[inside]) ** 2))

    def test_rows(self):
        cfg = ToyTaskConfig("gaussian", x_grid=(-1.0, 1.0, 2), y_grid=(0.0, 1.0, 3))
        rows = list(grid_from_estimator(cfg, lambda x, y: np.ones_like(x)).rows())
        assert len(rows) == 6 and rows[0][:3] == (-1.0, 0.0, 1.0)

    def test_spec_measure_mismatch(self):
        cfg = ToyTaskConfig("gaussian")
        with pytest.raises(ValueError):
            fit_and_grid(cfg, toy_spec("sl", ToyTaskConfig("exponential")), train_cfg=SHORT)


def _untrained_grid(cfg, name):
    spec = toy_spec(name, cfg)
    net = build_toy_net(spec, NetConfig(), int(substream(cfg.seed, "toy-init", spec.name).integers(2**31)))
    return grid_from_estimator(cfg, net_estimator(net, spec))


class TestTraining:
    @pytest.mark.parametrize("kind", ["gaussian", "exponential"])
    @pytest.mark.parametrize("name", NAMES)
    def test_training_improves_on_init(self, kind, name):
        for seed in range(5):
            cfg = ToyTaskConfig(kind, seed=seed)
            trained = fit_and_grid(cfg, name, train_cfg=SHORT)
            assert np.all(trained.estimate >= 0)
            assert trained.mse < _untrained_grid(cfg, name).mse

    def test_gaussian_sl_mse(self):
        assert fit_and_grid(ToyTaskConfig("gaussian"), "sl").mse < 0.01

    def test_exponential_sl_flat_in_x(self):
        # away from the x = y step, which a smooth network only resolves over a few grid cells
        grid = fit_and_grid(ToyTaskConfig("exponential", seed=0), "sl")
        worst = 0.0
        for j, y in enumerate(grid.y_axis):
            if y < 1.0:
                continue
            inner = (grid.x_axis > 0.25) & (grid.x_axis < y - 0.25)
            worst = max(worst, np.max(np.abs(grid.estimate[inner, j] * y - 1.0)))
        assert worst < 0.15
