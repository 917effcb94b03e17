import math
from dataclasses import replace

import numpy as np
import pytest

from helpers import positive_cloud
from lpgraph.harness import (ConfigError, ExperimentConfig, config_from_mapping,
                             format_frequencies, load_config, local_maxima, parse_config_text,
                             power_law_slope, rhat_frequencies, run_eigendecay,
                             run_estimation_sweep, run_null_histogram, run_power_table,
                             run_test_replicates)
from lpgraph.model import KernelSpec, LatentDistribution
from lpgraph.rng import replicate_seed


def small_config(**kw):
    base = dict(n=200, rho=0.6, replicates=6, eps_grid=(0.0, 0.5), draws=10_000, base_seed=3)
    base.update(kw)
    return ExperimentConfig(**base)


class TestConfigParsing:
    def test_parse(self):
        m = parse_config_text("kernel = gaussian  # comment\nkernel.scale=0.4\n\nn = 100\n")
        assert m == {"kernel": "gaussian", "kernel.scale": "0.4", "n": "100"}

    def test_mapping(self):
        cfg = config_from_mapping({"kernel": "gaussian", "latent": "normal", "latent.dim": "2",
                                   "n": "300", "rho": "0.8", "epsilon": "0, 0.2,0.5",
                                   "rank_mode": "3", "hollow": "true", "seed": "11"})
        assert cfg.kernel.variant == "gaussian" and cfg.latent.variant == "normal"
        assert cfg.eps_grid == (0.0, 0.2, 0.5)
        assert cfg.rank_mode == 3 and cfg.hollow and cfg.base_seed == 11

    def test_dot_product_matrix(self):
        cfg = config_from_mapping({"kernel": "dot", "kernel.matrix": "1,0|0,-1",
                                   "latent": "normal", "latent.dim": "2"})
        np.testing.assert_array_equal(cfg.kernel.matrix, [[1, 0], [0, -1]])

    def test_load_with_overrides(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("n = 100\nrho = 0.5\n")
        cfg = load_config(path, {"n": 250, "rho": None})
        assert cfg.n == 250 and cfg.rho == 0.5

    @pytest.mark.parametrize("text", ["n 100", "bogus = 1", "kernel = cubic", "rho = 2",
                                      "replicates = 0", "alpha = 1.5", "epsilon = 3",
                                      "hollow = maybe", "rank_mode = -1", "n = ten",
                                      "latent = cloud"])
    def test_errors(self, text):
        with pytest.raises(ConfigError):
            config_from_mapping(parse_config_text(text))

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            load_config(tmp_path / "none.cfg")


class TestHelpers:
    def test_frequencies(self):
        class R:
            def __init__(self, rhat):
                self.rhat = rhat
        freq = rhat_frequencies([R(3), R(6), R(6), R(6)])
        assert freq == {3: 0.25, 6: 0.75}
        assert math.isclose(sum(freq.values()), 1.0)
        assert format_frequencies({3: 0.05, 6: 0.95}) == "[3 (0.05), 6 (0.95)]"

    def test_slope(self):
        r = np.arange(1, 41)
        assert power_law_slope(3.0 * r ** -1.5, (2, 30)) == pytest.approx(-1.5)
        assert math.isnan(power_law_slope(np.r_[1.0, np.zeros(39)], (2, 30)))

    def test_local_maxima(self):
        assert local_maxima([5, 1, 3, 2, 2, 4]) == [1, 3, 6]


class TestDrivers:
    def test_replicate_seeds(self):
        recs = run_test_replicates(small_config(), 0.0)
        assert [r.seed for r in recs] == [replicate_seed(3, k) for k in range(6)]
        assert [r.seed for r in recs] == [3 ^ k for k in range(6)]

    def test_deterministic_and_thread_invariant(self):
        a = [r.csv_row() for r in run_power_table(small_config(threads=1))]
        b = [r.csv_row() for r in run_power_table(small_config(threads=3))]
        c = [r.csv_row() for r in run_power_table(small_config(threads=1))]
        assert a == b == c

    def test_power_rows(self):
        rows = run_power_table(small_config())
        assert [r.eps for r in rows] == [0.0, 0.5]
        for row in rows:
            assert 0 <= row.rate <= 1
            assert row.se == pytest.approx(math.sqrt(row.rate * (1 - row.rate) / 6))
            assert sum(row.rhat_freq.values()) == pytest.approx(1.0)

    def test_fair_coin_size(self):
        # identical latent positions for every vertex, so the null holds for every pair
        cfg = ExperimentConfig(kernel=KernelSpec.constant(0.5), n=150, rho=1.0, replicates=300,
                               draws=10_000, base_seed=21, rank_mode=1)
        row = run_power_table(cfg)[0]
        se = math.sqrt(0.05 * 0.95 / 300)
        assert abs(row.rate - 0.05) <= 3 * se

    def test_resample_latents(self):
        cfg = small_config(resample_latents=True, replicates=3, eps_grid=(0.0,))
        assert len(run_power_table(cfg)[0].records) == 3

    def test_null_histogram(self):
        hist = run_null_histogram(small_config(eps_grid=(0.0,)))
        assert hist.statistics.size + sum(r.degenerate for r in hist.records) == 6
        assert hist.sigma > 0 and np.all(hist.weights >= -1e-12)

    def test_eigendecay_constant_guard(self):
        cfg = ExperimentConfig(kernel=KernelSpec.constant(0.5), n=120, rho=1.0, replicates=2,
                               top_k=10)
        res = run_eigendecay(cfg)
        assert res.mean_values[0] == pytest.approx(0.5)
        assert np.all(np.abs(res.mean_values[1:]) <= 1e-12)
        assert math.isnan(res.slope)

    def test_eigendecay_laplace(self):
        cfg = ExperimentConfig(n=1500, rho=1.0, replicates=2, top_k=40, base_seed=5)
        res = run_eigendecay(cfg)
        assert len(res.rows) == 80
        assert -1.8 <= res.slope <= -1.2
        assert 1 in res.gap_maxima

    def test_sweep_laplace_trend(self):
        cfg = ExperimentConfig(n=500, rho=0.4, replicates=3, base_seed=2)
        rows = run_estimation_sweep(cfg, [500, 1000, 2000])
        errs = [r.max_norm_scaled for r in rows]
        assert errs[0] >= errs[1] >= errs[2]
        for r in rows:
            assert r.max_norm_scaled >= r.best_rank_error - 1e-9 or r.rhat != int(r.rhat)

    def test_sweep_rank_two(self):
        cfg = ExperimentConfig(kernel=KernelSpec.dot_product(np.eye(2)),
                               latent=LatentDistribution.point_cloud(positive_cloud(400, seed=1)),
                               rho=1.0, replicates=2, rank_mode=2, base_seed=4)
        rows = run_estimation_sweep(cfg, [250, 500, 1000])
        errs = [r.max_norm_scaled for r in rows]
        assert errs[0] > errs[1] > errs[2]
        assert all(r.best_rank_error <= 1e-10 for r in rows)

    def test_sweep_grid_guard(self):
        with pytest.raises(ConfigError):
            run_estimation_sweep(small_config(), [500, 500])

    def test_power_empty_grid(self):
        cfg = replace(small_config(), eps_grid=())
        with pytest.raises(ConfigError):
            run_power_table(cfg)
