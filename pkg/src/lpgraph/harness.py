"""Monte Carlo experiment drivers and configuration handling.

Each configuration fixes one edge-probability matrix ``P`` (latent positions
drawn from the base seed) and redraws only the adjacency matrix per
replicate, with replicate seed ``base_seed XOR index``.  Set
``resample_latents`` to redraw the latent positions as well.
"""

from __future__ import annotations

import math
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .inference import best_rank_error, entrywise_error, estimate_p
from .io import read_point_cloud
from .linalg import eig_dense, top_eigenpairs
from .lptest import TestConfig, adaptive_spectrum, leading_pairs, run_pair_test
from .model import (KernelSpec, LatentDistribution, ModelError, build_p, place_pair_at_distance,
                    sample_adjacency, sample_latents)
from .rng import replicate_seed
from .theory import default_j_max, select_rank_test


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass
class ExperimentConfig:
    kernel: KernelSpec = field(default_factory=KernelSpec.laplace)
    latent: LatentDistribution = field(
        default_factory=lambda: LatentDistribution.uniform_sphere(3))
    n: int = 1000
    rho: float = 0.4
    replicates: int = 500
    eps_grid: tuple = (0.0,)
    alpha: float = 0.05
    base_seed: int = 0
    threads: int = 1
    rank_mode: object = "auto"
    draws: int = 200_000
    hollow: bool = False
    exclude_self: bool = False
    resample_latents: bool = False
    top_k: int = 40
    fit_window: tuple = (2, 30)
    nu: float = 1.0

    def __post_init__(self):
        if self.replicates < 1:
            raise ConfigError("replicates must be at least 1")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        if self.n < 2:
            raise ConfigError("n must be at least 2")
        if not 0 < self.rho <= 1:
            raise ConfigError("rho must lie in (0, 1]")
        if self.latent.variant == "sphere" and any(e > 2 for e in self.eps_grid):
            raise ConfigError("epsilon above 2 is infeasible on the unit sphere")
        if any(e < 0 for e in self.eps_grid):
            raise ConfigError("epsilon must be nonnegative")
        if self.rank_mode != "auto" and not (isinstance(self.rank_mode, int) and self.rank_mode >= 1):
            raise ConfigError("rank_mode must be 'auto' or a positive integer")

    @property
    def pair(self) -> tuple:
        """Tested vertices: the first and the last."""
        return 0, self.n - 1

    def test_config(self, seed: int) -> TestConfig:
        return TestConfig(rank=self.rank_mode, draws=self.draws, seed=seed,
                          exclude_self=self.exclude_self)


# ---------------------------------------------------------------------------
# configuration files
# ---------------------------------------------------------------------------

CONFIG_KEYS = {"kernel", "kernel.scale", "kernel.matrix", "latent", "latent.dim",
               "latent.file", "n", "rho", "replicates", "epsilon", "alpha", "seed",
               "rank_mode", "draws", "hollow", "threads", "exclude_self",
               "resample_latents", "top_k", "fit_window", "nu"}


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        out[key] = value
    return out


def _bool(v: str) -> bool:
    s = str(v).strip().lower()
    if s in {"1", "true", "yes", "on"}:
        return True
    if s in {"0", "false", "no", "off"}:
        return False
    raise ConfigError(f"not a boolean: {v!r}")


def _floats(v: str) -> tuple:
    return tuple(float(x) for x in str(v).replace(";", ",").split(",") if x.strip())


def config_from_mapping(m: dict) -> ExperimentConfig:
    """Build an :class:`ExperimentConfig` from string-valued settings."""
    try:
        kname = m.get("kernel", "laplace").lower()
        scale = m.get("kernel.scale")
        if kname == "laplace":
            kernel = KernelSpec.laplace(float(scale) if scale else 1.0)
        elif kname == "gaussian":
            kernel = KernelSpec.gaussian(float(scale) if scale else 0.4)
        elif kname in {"dot", "dotproduct", "dot_product"}:
            rows = [_floats(r) for r in m.get("kernel.matrix", "1").split("|")]
            kernel = KernelSpec.dot_product(np.array(rows))
        elif kname == "constant":
            kernel = KernelSpec.constant(float(scale) if scale else 0.5)
        else:
            raise ConfigError(f"unknown kernel {kname!r}")
        lname = m.get("latent", "sphere").lower()
        dim = int(m.get("latent.dim", 3))
        if lname == "sphere":
            latent = LatentDistribution.uniform_sphere(dim)
        elif lname == "normal":
            latent = LatentDistribution.standard_normal(dim)
        elif lname == "cloud":
            if "latent.file" not in m:
                raise ConfigError("latent = cloud needs latent.file")
            latent = LatentDistribution.point_cloud(read_point_cloud(m["latent.file"]))
        else:
            raise ConfigError(f"unknown latent distribution {lname!r}")
        rank = m.get("rank_mode", "auto")
        rank = "auto" if str(rank).lower() == "auto" else int(rank)
        kw = dict(kernel=kernel, latent=latent, rank_mode=rank)
        if "n" in m:
            kw["n"] = int(m["n"])
        if "rho" in m:
            kw["rho"] = float(m["rho"])
        if "replicates" in m:
            kw["replicates"] = int(m["replicates"])
        if "epsilon" in m:
            kw["eps_grid"] = _floats(m["epsilon"])
        if "alpha" in m:
            kw["alpha"] = float(m["alpha"])
        if "seed" in m:
            kw["base_seed"] = int(m["seed"])
        if "draws" in m:
            kw["draws"] = int(m["draws"])
        if "hollow" in m:
            kw["hollow"] = _bool(m["hollow"])
        if "threads" in m:
            kw["threads"] = int(m["threads"])
        if "exclude_self" in m:
            kw["exclude_self"] = _bool(m["exclude_self"])
        if "resample_latents" in m:
            kw["resample_latents"] = _bool(m["resample_latents"])
        if "top_k" in m:
            kw["top_k"] = int(m["top_k"])
        if "fit_window" in m:
            lo, hi = (int(x) for x in _floats(m["fit_window"]))
            kw["fit_window"] = (lo, hi)
        if "nu" in m:
            kw["nu"] = float(m["nu"])
        return ExperimentConfig(**kw)
    except ConfigError:
        raise
    except (ValueError, ModelError, OSError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        m = parse_config_text(fh.read())
    m.update({k: str(v) for k, v in (overrides or {}).items() if v is not None})
    return config_from_mapping(m)


# ---------------------------------------------------------------------------
# instances
# ---------------------------------------------------------------------------

def make_probability(config: ExperimentConfig, eps: float | None = None,
                     latent_seed: int | None = None):
    """Latent sample (with the tested pair at distance ``eps``) and its ``P``."""
    seed = config.base_seed if latent_seed is None else latent_seed
    sample = sample_latents(config.latent, config.n, seed)
    if eps is not None:
        i, j = config.pair
        sample = place_pair_at_distance(sample, i, j, eps, seed)
    return sample, build_p(sample, config.kernel, config.rho)


@dataclass
class ReplicateRecord:
    replicate_index: int
    seed: int
    rhat: int
    T: float
    reject: bool
    timing_ms: float
    p_value: float = math.nan
    degenerate: bool = False
    rank_fallback: bool = False
    weights: np.ndarray | None = None
    sigma: float = math.nan


def _map(fn, items, threads):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def run_test_replicates(config: ExperimentConfig, eps: float, p=None) -> list:
    """One pair test per replicate at latent distance ``eps``."""
    if p is None and not config.resample_latents:
        _, p = make_probability(config, eps)
    i, j = config.pair

    def one(rep):
        seed = replicate_seed(config.base_seed, rep)
        start = time.perf_counter()
        pm = p if not config.resample_latents else make_probability(config, eps, seed)[1]
        a = sample_adjacency(pm, seed, hollow=config.hollow)
        rep_ = run_pair_test(a, i, j, config.alpha, config.test_config(seed))
        ms = (time.perf_counter() - start) * 1e3
        return ReplicateRecord(rep, seed, rep_.rhat, rep_.T, rep_.reject, ms, rep_.p_value,
                               rep_.degenerate, rep_.rank_fallback, rep_.weights, rep_.sigma)

    return _map(one, range(config.replicates), config.threads)


def rhat_frequencies(records) -> dict:
    counts = Counter(r.rhat for r in records)
    total = sum(counts.values())
    return {k: counts[k] / total for k in sorted(counts)}


def format_frequencies(freq: dict) -> str:
    """``[3 (0.05), 6 (0.95)]``."""
    return "[" + ", ".join(f"{k} ({v:.6g})" for k, v in freq.items()) + "]"


@dataclass
class PowerRow:
    n: int
    rho: float
    eps: float
    rate: float
    se: float
    rhat_freq: dict
    degenerate: int
    replicates: int
    records: list = field(repr=False, default_factory=list)

    def csv_row(self):
        return (self.n, self.rho, self.eps, self.rate, self.se,
                format_frequencies(self.rhat_freq), self.degenerate, self.replicates)


POWER_HEADER = ["n", "rho", "epsilon", "rejection_rate", "se", "rhat_freq", "degenerate",
                "replicates"]


def summarize(config, eps, records) -> PowerRow:
    rate = float(np.mean([r.reject for r in records]))
    se = math.sqrt(rate * (1 - rate) / len(records))
    return PowerRow(config.n, config.rho, eps, rate, se, rhat_frequencies(records),
                    sum(r.degenerate for r in records), len(records), records)


def run_power_table(config: ExperimentConfig) -> list:
    """Rejection rate and ``r_hat`` frequencies for every ``eps`` in the grid."""
    if not config.eps_grid:
        raise ConfigError("epsilon grid is empty")
    return [summarize(config, eps, run_test_replicates(config, eps))
            for eps in config.eps_grid]


@dataclass
class NullHistogram:
    records: list
    weights: np.ndarray
    sigma: float

    @property
    def statistics(self) -> np.ndarray:
        return np.array([r.T for r in self.records if not r.degenerate])


def run_null_histogram(config: ExperimentConfig) -> NullHistogram:
    """Null statistics (``X_i = X_j``) and the last replicate's mixture weights."""
    records = run_test_replicates(config, 0.0)
    last = next((r for r in reversed(records) if not r.degenerate), records[-1])
    return NullHistogram(records, last.weights, last.sigma)


@dataclass
class EigendecayResult:
    rows: list            # (replicate, r, lambda_r / n, gap_r / n)
    slopes: list          # per replicate
    slope: float          # fit to the replicate-averaged spectrum
    gap_maxima: list      # local maxima of the averaged gap profile

    @property
    def mean_values(self) -> np.ndarray:
        r = max(row[1] for row in self.rows)
        v = np.zeros(r)
        for row in self.rows:
            v[row[1] - 1] += row[2]
        return v / len(self.slopes)


def power_law_slope(values, window) -> float:
    """Least-squares slope of ``log value`` on ``log r`` for ``r`` in ``window``.

    Returns NaN when a value in the window is zero up to rounding, relative
    to the largest value.
    """
    lo, hi = window
    full = np.asarray(values, dtype=float)
    v = full[lo - 1:hi]
    r = np.arange(lo, lo + v.size)
    if v.size < 2 or np.any(v <= 1e-10 * np.abs(full).max()):
        return math.nan
    return float(np.polyfit(np.log(r), np.log(v), 1)[0])


def local_maxima(gaps) -> list:
    g = np.asarray(gaps, dtype=float)
    out = []
    for k in range(g.size):
        left = g[k - 1] if k > 0 else -math.inf
        right = g[k + 1] if k + 1 < g.size else -math.inf
        if g[k] > left and g[k] > right:
            out.append(k + 1)
    return out


def run_eigendecay(config: ExperimentConfig) -> EigendecayResult:
    """Leading spectrum of ``P`` (no Bernoulli noise) per replicate."""
    k = config.top_k
    rows, slopes, spectra = [], [], []

    def one(rep):
        seed = replicate_seed(config.base_seed, rep)
        _, p = make_probability(config, None, seed)
        dec = top_eigenpairs(p.entries, k + 1, seed=seed, tol=1e-10)
        return np.abs(dec.eigenvalues) / config.n

    for rep, vals in enumerate(_map(one, range(config.replicates), config.threads)):
        gaps = vals[:k] - vals[1:k + 1]
        for r in range(k):
            rows.append((rep, r + 1, float(vals[r]), float(gaps[r])))
        slopes.append(power_law_slope(vals[:k], config.fit_window))
        spectra.append(vals)
    mean = np.mean(spectra, axis=0)
    return EigendecayResult(rows, slopes, power_law_slope(mean[:k], config.fit_window),
                            local_maxima(mean[:k] - mean[1:k + 1]))


@dataclass
class SweepRow:
    n: int
    rhat: float
    max_norm_scaled: float
    fro_scaled: float
    best_rank_error: float


def run_estimation_sweep(config: ExperimentConfig, n_grid) -> list:
    """Mean entrywise error of the spectral estimate of ``P`` across ``n``."""
    n_grid = list(n_grid)
    if any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise ConfigError("n_grid must be increasing")
    out = []
    for n in n_grid:
        cfg = replace(config, n=n, eps_grid=(0.0,))
        _, p = make_probability(cfg)

        def one(rep, cfg=cfg, p=p):
            seed = replicate_seed(cfg.base_seed, rep)
            a = sample_adjacency(p, seed, hollow=cfg.hollow).dense()
            if cfg.rank_mode == "auto":
                d_ave = float(a.sum()) / n
                tc = TestConfig(seed=seed)
                dec = adaptive_spectrum(a, d_ave, default_j_max(n, n), tc)
                rep_ = select_rank_test(dec.eigenvalues, d_ave, n, j_max=dec.k - 1)
                r = rep_.rhat or 1
            else:
                r = int(cfg.rank_mode)
                dec = leading_pairs(a, r, TestConfig(seed=seed))
            err = entrywise_error(estimate_p(dec, r), p.entries, cfg.rho)
            return r, err["max_norm_scaled"], err["frobenius_scaled"]

        res = _map(one, range(cfg.replicates), cfg.threads)
        ranks = [x[0] for x in res]
        p_dec = top_eigenpairs(p.entries, max(ranks) + 1, seed=cfg.base_seed)
        bias = float(np.mean([best_rank_error(p_dec, p.entries, r, cfg.rho) for r in ranks]))
        out.append(SweepRow(n, float(np.mean(ranks)), float(np.mean([x[1] for x in res])),
                            float(np.mean([x[2] for x in res])), bias))
    return out


def dense_decomposition(m: np.ndarray):
    return eig_dense(m, max_n=max(4000, m.shape[0]))
