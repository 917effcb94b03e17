"""Rank-adaptive two-sample test for equality of two latent positions.

For vertices ``i`` and ``j`` the statistic is

    T = (|(A_i - A_j)^T U_hat|^2 - |D_hat U_hat|_F^2) / |U_hat^T D_hat^2 U_hat|_F

with ``D_hat = diag(|a_ik - a_jk|)`` and ``U_hat`` the leading ``r_hat``
eigenvectors of ``A``.  Under the null it is calibrated by the centred
weighted chi-square mixture ``sum_s w_s (Z_s^2 - 1) / sigma_hat`` whose
weights are the eigenvalues of ``U_hat^T D_hat^2 U_hat``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

from .linalg import SpectralDecomposition, eig_dense, eig_topk_lanczos, dense_matvec
from .model import Adjacency
from .rng import STREAM_NULL, make_rng
from .theory import RankReport, default_j_max, select_rank_test, test_rank_threshold

DEFAULT_DRAWS = 200_000
MIN_DRAWS = 10_000
_CHUNK = 20_000


def _dense(a) -> np.ndarray:
    return a.dense() if isinstance(a, Adjacency) else np.asarray(a, dtype=float)


def row_difference(a, i: int, j: int, exclude_self: bool = False) -> np.ndarray:
    """``A_i - A_j``, optionally with the entries ``k in {i, j}`` zeroed."""
    if i == j:
        raise ValueError("i and j must differ")
    a = _dense(a)
    diff = a[i] - a[j]
    if exclude_self:
        diff = diff.copy()
        diff[[i, j]] = 0.0
    return diff


def dhat(a, i: int, j: int, exclude_self: bool = False) -> np.ndarray:
    """Diagonal of ``D_hat``: ``|a_ik - a_jk|``."""
    return np.abs(row_difference(a, i, j, exclude_self))


@dataclass
class Statistic:
    T: float
    theta: float
    sigma: float
    weights: np.ndarray
    degenerate: bool


def statistic_from_difference(diff: np.ndarray, uhat: np.ndarray) -> Statistic:
    """Test statistic from a row difference and an orthonormal block."""
    uhat = np.atleast_2d(uhat)
    if uhat.shape[0] != diff.shape[0]:
        raise ValueError("row difference and eigenvectors disagree in length")
    proj = diff @ uhat
    d2 = diff * diff
    row_sq = (uhat * uhat).sum(axis=1)
    theta = float(d2 @ row_sq)
    m = (uhat * d2[:, None]).T @ uhat
    m = 0.5 * (m + m.T)
    sigma = float(np.linalg.norm(m))
    weights = np.linalg.eigvalsh(m)[::-1]
    if sigma == 0.0:
        return Statistic(math.nan, theta, 0.0, weights, True)
    t = (float(proj @ proj) - theta) / sigma
    return Statistic(t, theta, sigma, weights, False)


def test_statistic(a, uhat: np.ndarray, i: int, j: int, exclude_self: bool = False) -> Statistic:
    """Statistic ``T`` with centring ``theta``, scale ``sigma`` and mixture weights."""
    return statistic_from_difference(row_difference(a, i, j, exclude_self), uhat)


def off_diagonal_form(diff: np.ndarray, uhat: np.ndarray) -> float:
    """``sum_{k != l} diff_k diff_l <U_k, U_l>``, the numerator written as a double sum."""
    g = uhat @ uhat.T
    outer = np.outer(diff, diff) * g
    return float(outer.sum() - np.trace(outer))


# ---------------------------------------------------------------------------
# null calibration
# ---------------------------------------------------------------------------

@dataclass
class NullDistribution:
    """Monte Carlo sample of the centred weighted chi-square mixture."""

    draws: np.ndarray  # sorted ascending
    alpha: float
    c_star: float

    def p_value(self, t: float) -> float:
        """``(1 + #{draws >= t}) / (B + 1)``."""
        if math.isnan(t):
            return 1.0
        b = self.draws.size
        above = b - int(np.searchsorted(self.draws, t, side="left"))
        return (1 + above) / (b + 1)


def mixture_draws(weights, sigma: float, draws: int, seed: int) -> np.ndarray:
    """``sum_s w_s (Z_s^2 - 1) / sigma`` for ``draws`` independent normal vectors."""
    w = np.asarray(weights, dtype=float)
    rng = make_rng(seed, STREAM_NULL)
    out = np.empty(draws)
    for start in range(0, draws, _CHUNK):
        stop = min(draws, start + _CHUNK)
        z = rng.standard_normal((stop - start, w.size))
        z *= z
        z -= 1.0
        out[start:stop] = z @ w
    out /= sigma
    return out


def null_critical_value(weights, sigma: float, alpha: float = 0.05,
                        draws: int = DEFAULT_DRAWS, seed: int = 0) -> NullDistribution:
    """Monte Carlo ``(1 - alpha)`` quantile of the null mixture.

    ``alpha = 1`` returns ``-inf`` as the critical value.
    """
    w = np.asarray(weights, dtype=float)
    if draws < MIN_DRAWS:
        raise ValueError(f"need at least {MIN_DRAWS} draws")
    if not np.any(w != 0) or not sigma > 0:
        raise ValueError("null mixture has no nonzero weight")
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    sample = np.sort(mixture_draws(w, sigma, draws, seed))
    if alpha >= 1:
        c_star = -math.inf
    else:
        idx = max(0, math.ceil((1.0 - alpha) * draws) - 1)
        c_star = float(sample[idx])
    return NullDistribution(sample, alpha, c_star)


def mixture_sf_exact(x: float, weights, sigma: float) -> float:
    """Upper tail ``P(sum_s w_s (Z_s^2 - 1)/sigma > x)`` by characteristic-function inversion.

    Weights must be nonnegative.  The oscillatory tail of the inversion
    integral is handled by a Fourier-weighted quadrature past ``u = head``.
    """
    w = np.asarray(weights, dtype=float)
    if w.size == 0 or np.any(w < -1e-12 * np.abs(w).max()):
        raise ValueError("weights must be nonnegative")
    w = w[w > 0]
    y = x * sigma + w.sum()
    if y <= 0:
        return 1.0
    half = 0.5 * y

    def phase(u):
        return 0.5 * np.arctan(w * u).sum()

    def envelope(u):
        return u * np.prod((1.0 + (w * u) ** 2) ** 0.25)

    def integrand(u):
        if u == 0:
            return 0.5 * (w.sum() - y)
        return math.sin(phase(u) - half * u) / envelope(u)

    head = 50.0 / float(w.max())
    val, _ = integrate.quad(integrand, 0.0, head, limit=1000, epsabs=1e-12)
    # sin(c - h u) = sin(c) cos(h u) - cos(c) sin(h u)
    cos_part, _ = integrate.quad(lambda u: math.sin(phase(u)) / envelope(u), head, np.inf,
                                 weight="cos", wvar=half)
    sin_part, _ = integrate.quad(lambda u: -math.cos(phase(u)) / envelope(u), head, np.inf,
                                 weight="sin", wvar=half)
    val += cos_part + sin_part
    return float(min(1.0, max(0.0, 0.5 + val / math.pi)))


def exact_critical_value(weights, sigma: float, alpha: float = 0.05) -> float:
    """``(1 - alpha)`` quantile of the mixture by root finding on the exact tail."""
    if alpha >= 1:
        return -math.inf
    w = np.asarray(weights, dtype=float)
    lo = -w.sum() / sigma
    hi = max(1.0, 10.0 * float(np.linalg.norm(w)) / sigma)
    while mixture_sf_exact(hi, w, sigma) > alpha:
        hi *= 2.0
    return float(optimize.brentq(lambda x: mixture_sf_exact(x, w, sigma) - alpha, lo, hi,
                                 xtol=1e-8))


# ---------------------------------------------------------------------------
# full pipeline
# ---------------------------------------------------------------------------

@dataclass
class TestConfig:
    """Settings of :func:`run_pair_test`.

    ``rank`` is ``"auto"`` or a fixed positive integer.
    """

    rank: object = "auto"
    draws: int = DEFAULT_DRAWS
    seed: int = 0
    j_max: int | None = None
    exclude_self: bool = False
    backend: str = "mc"
    solver_tol: float = 1e-8
    initial_k: int = 8
    dense_below: int = 400


@dataclass
class TestReport:
    i: int
    j: int
    rhat: int
    T: float
    theta: float
    sigma: float
    weights: np.ndarray
    c_star: float
    p_value: float
    reject: bool
    degenerate: bool
    rank_fallback: bool = False
    d_ave: float = 0.0
    rank_report: RankReport | None = None
    eigenvalues: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def row(self) -> dict:
        return {"i": self.i, "j": self.j, "rhat": self.rhat, "T": self.T,
                "theta": self.theta, "sigma": self.sigma, "cstar": self.c_star,
                "pvalue": self.p_value, "reject": int(self.reject),
                "degenerate": int(self.degenerate)}


def leading_pairs(a: np.ndarray, k: int, config: TestConfig) -> SpectralDecomposition:
    n = a.shape[0]
    k = min(k, n)
    if n <= config.dense_below or 4 * k > n:
        return eig_dense(a, max_n=max(n, 4000)).head(k)
    return eig_topk_lanczos(dense_matvec(a), n, k, tol=config.solver_tol, seed=config.seed)


def adaptive_spectrum(a: np.ndarray, d_ave: float, j_max: int,
                      config: TestConfig) -> SpectralDecomposition:
    """Leading pairs, enough to decide the rank rule over ``j <= j_max``.

    The threshold is nondecreasing in ``j`` and every gap ``j >= k`` is at
    most ``|lambda_k|``.  Once ``|lambda_k|`` falls below the threshold at
    ``k`` no larger candidate can qualify, so ``k`` is doubled only until
    that happens or ``k = j_max + 1``.
    """
    n = a.shape[0]
    limit = min(n, j_max + 1)
    k = min(max(2, config.initial_k), limit)
    while True:
        dec = leading_pairs(a, k, config)
        if k >= limit:
            return dec
        if abs(dec.eigenvalues[k - 1]) < test_rank_threshold(k, d_ave, n):
            return dec
        k = min(2 * k, limit)


def run_pair_test(a, i: int, j: int, alpha: float = 0.05,
                  config: TestConfig | None = None) -> TestReport:
    """Rank selection, statistic and calibrated decision for the pair ``(i, j)``."""
    config = config or TestConfig()
    if i == j:
        raise ValueError("i and j must differ")
    a = _dense(a)
    n = a.shape[0]
    d_ave = float(a.sum()) / n
    j_max = config.j_max or default_j_max(n, n)
    fallback = False
    rank_report = None
    if config.rank == "auto":
        dec = adaptive_spectrum(a, d_ave, j_max, config)
        rank_report = select_rank_test(dec.eigenvalues, d_ave, n, j_max=min(j_max, dec.k - 1))
        if rank_report.rhat is None:
            rhat, fallback = 1, True
        else:
            rhat = rank_report.rhat
    else:
        rhat = int(config.rank)
        if not 1 <= rhat < n:
            raise ValueError("fixed rank out of range")
        dec = leading_pairs(a, rhat, config)
    uhat = dec.vectors[:, :rhat]
    stat = test_statistic(a, uhat, i, j, config.exclude_self)
    common = dict(i=i, j=j, rhat=rhat, theta=stat.theta, sigma=stat.sigma,
                  weights=stat.weights, rank_fallback=fallback, d_ave=d_ave,
                  rank_report=rank_report, eigenvalues=dec.eigenvalues)
    if stat.degenerate:
        return TestReport(T=math.nan, c_star=math.nan, p_value=1.0, reject=False,
                          degenerate=True, **common)
    if config.backend == "exact":
        c_star = exact_critical_value(stat.weights, stat.sigma, alpha)
        p_value = mixture_sf_exact(stat.T, stat.weights, stat.sigma)
    else:
        null = null_critical_value(stat.weights, stat.sigma, alpha, config.draws, config.seed)
        c_star, p_value = null.c_star, null.p_value(stat.T)
    return TestReport(T=stat.T, c_star=c_star, p_value=p_value, reject=bool(stat.T > c_star),
                      degenerate=False, **common)
