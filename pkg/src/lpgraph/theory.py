"""Explicit constants, rank-selection rules, coherence and the bound certificate."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .linalg import (SpectralDecomposition, block_signed_procrustes, delta2_distance,
                     modulus_order, procrustes, two_to_inf)

J_MAX_CAP = 64


def varsigma(nu: float, n: int, rho: float) -> float:
    """High-probability bound on ``|A - P|``.

    ``2 sqrt(2 e n rho) + (56 sqrt(e) + sqrt(2 nu)) sqrt(log n)``.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    return (2.0 * math.sqrt(2.0 * math.e * n * rho)
            + (56.0 * math.sqrt(math.e) + math.sqrt(2.0 * nu)) * math.sqrt(math.log(n)))


def vartheta(c: float, r: int, n: int) -> float:
    """``c log n + r log 9``."""
    if n < 2:
        raise ValueError("n must be at least 2")
    return c * math.log(n) + r * math.log(9.0)


@dataclass
class RankReport:
    """Outcome of a rank-selection rule.

    ``gaps[j-1]`` and ``thresholds[j-1]`` refer to candidate rank ``j``.
    ``rhat`` is ``None`` when no candidate qualifies.
    """

    rhat: int | None
    gaps: np.ndarray
    thresholds: np.ndarray
    admissible: list
    rule: str
    warning: str | None = None
    extra: dict = field(default_factory=dict)

    def rows(self):
        """``(j, gap, threshold, admissible)`` tuples."""
        adm = set(self.admissible)
        return [(j + 1, float(g), float(t), (j + 1) in adm)
                for j, (g, t) in enumerate(zip(self.gaps, self.thresholds))]


def modulus_gaps(values, j_max: int) -> np.ndarray:
    """``|l_j| - |l_{j+1}|`` for ``j = 1..j_max`` (values already modulus-ordered)."""
    mod = np.abs(np.asarray(values, dtype=float))
    return mod[:j_max] - mod[1:j_max + 1]


def default_j_max(n: int, available: int) -> int:
    return max(1, min(n - 1, J_MAX_CAP, available - 1))


def datadriven_conditions(lamhat, nu: float, n: int, rho: float, r: int,
                          general: bool = False) -> tuple:
    """Evaluate both data-driven admissibility inequalities for rank ``r``.

    Returns ``(gap, gap_threshold, modulus, modulus_threshold)``.  The PSD
    version bounds the gap by ``max{4s, (16/3)(nu+2) log n} + 2s`` and the
    r-th modulus by ``max{16(nu+2) log n + 64 s^2/gap, vartheta(nu+1, r, n)}
    + s`` where ``s = varsigma(nu, n, rho)``.  The general (indefinite)
    version replaces the second bound by ``max{16(nu+2) log n + 64 s^2/gap,
    sqrt(n rho vartheta(nu+2, r, n))} + s``.
    """
    lamhat = np.abs(np.asarray(lamhat, dtype=float))
    s = varsigma(nu, n, rho)
    logn = math.log(n)
    gap = lamhat[r - 1] - lamhat[r]
    gap_thr = max(4.0 * s, 16.0 / 3.0 * (nu + 2) * logn) + 2.0 * s
    with np.errstate(divide="ignore", over="ignore"):
        quad = 64.0 * s * s / gap if gap > 0 else math.inf
    if general:
        floor = math.sqrt(n * rho * vartheta(nu + 2, r, n))
    else:
        floor = vartheta(nu + 1, r, n)
    mod_thr = max(16.0 * (nu + 2) * logn + quad, floor) + s
    return gap, gap_thr, lamhat[r - 1], mod_thr


def select_rank_datadriven(lamhat, nu: float, n: int, rho: float, j_max: int | None = None,
                           general: bool = False) -> RankReport:
    """Admissible ranks of the data-driven rule; ``rhat`` is the largest."""
    lamhat = np.asarray(lamhat, dtype=float)
    if lamhat.size < 2:
        raise ValueError("need at least two eigenvalues")
    j_max = j_max or default_j_max(n, lamhat.size)
    j_max = min(j_max, lamhat.size - 1)
    gaps, thr, adm = [], [], []
    mod_thr = []
    for r in range(1, j_max + 1):
        g, gt, m, mt = datadriven_conditions(lamhat, nu, n, rho, r, general)
        gaps.append(g)
        thr.append(gt)
        mod_thr.append(mt)
        if g >= gt and m >= mt:
            adm.append(r)
    return RankReport(max(adm) if adm else None, np.array(gaps), np.array(thr), adm,
                      "datadriven-general" if general else "datadriven",
                      extra={"modulus_thresholds": np.array(mod_thr)})


def test_rank_threshold(j, d_ave: float, n: int):
    """``max(log^{7/4} n, j^{1/2} d_ave^{1/2} log^{3/4} n, d_ave^{3/4})``."""
    logn = math.log(n)
    j = np.asarray(j, dtype=float)
    return np.maximum(np.maximum(logn ** 1.75, np.sqrt(j * d_ave) * logn ** 0.75),
                      d_ave ** 0.75)


def select_rank_test(lamhat, d_ave: float, n: int, j_max: int | None = None) -> RankReport:
    """Largest ``j`` whose modulus gap clears the test-rule threshold."""
    lamhat = np.asarray(lamhat, dtype=float)
    if d_ave < 0:
        raise ValueError("average degree must be nonnegative")
    if lamhat.size < 2:
        raise ValueError("need at least two eigenvalues")
    j_max = j_max or default_j_max(n, lamhat.size)
    j_max = min(j_max, lamhat.size - 1)
    gaps = modulus_gaps(lamhat, j_max)
    thr = test_rank_threshold(np.arange(1, j_max + 1), d_ave, n)
    adm = [int(j) + 1 for j in np.flatnonzero(gaps >= thr)]
    rhat = max(adm) if adm else None
    warn = None if adm else "no eigengap clears the threshold"
    return RankReport(rhat, gaps, thr, adm, "test", warn, {"d_ave": d_ave})


def coherence(u: np.ndarray) -> float:
    """``(n/r) |U|_{2->inf}^2``."""
    u = np.atleast_2d(u)
    n, r = u.shape
    return n / r * two_to_inf(u) ** 2


@dataclass
class CoherenceCheck:
    holds: bool
    lhs: float
    rhs: float
    row: int


def psd_coherence_check(decomp: SpectralDecomposition, r: int, rho: float,
                        tol: float = 1e-10) -> CoherenceCheck:
    """Check ``|U |Lambda|^{1/2}|_{2->inf} <= sqrt(rho)`` for a PSD-kernel ``P``.

    Refuses decompositions with a negative eigenvalue, which signal an
    indefinite kernel.
    """
    vals = decomp.eigenvalues
    if vals.size and vals.min() < -1e-10 * max(1.0, abs(vals[0])):
        raise ValueError("coherence bound requires a positive semidefinite kernel")
    d = decomp.head(r)
    x = d.vectors * np.sqrt(np.abs(d.eigenvalues))
    rows = np.sqrt((x * x).sum(axis=1))
    lhs = float(rows.max())
    rhs = math.sqrt(rho)
    return CoherenceCheck(lhs <= rhs + tol, lhs, rhs, int(rows.argmax()))


def coherence_admissible(mu, n: int, c: float) -> list:
    """Ranks with ``mu_r >= 4 sqrt(2c) sqrt(log n / n)``."""
    floor = 4.0 * math.sqrt(2.0 * c) * math.sqrt(math.log(n) / n)
    return [r + 1 for r, m in enumerate(np.asarray(mu, dtype=float)) if m >= floor]


@dataclass
class ConsistencyReport:
    deviation: float
    bound: float
    passed: bool
    delta2: float


def eigenvalue_consistency(lam, mu_hat, n: int, rho: float, c: float) -> ConsistencyReport:
    """Compare ``(n rho)^{-1} lambda_j`` with operator estimates ``mu_j``.

    Bound ``2 sqrt(2c) sqrt(log n / n)`` on the largest deviation over the
    common indices.
    """
    lam = np.asarray(lam, dtype=float) / (n * rho)
    mu = np.asarray(mu_hat, dtype=float)
    k = min(lam.size, mu.size)
    dev = float(np.max(np.abs(lam[:k] - mu[:k]))) if k else 0.0
    bound = 2.0 * math.sqrt(2.0 * c) * math.sqrt(math.log(n) / n)
    return ConsistencyReport(dev, bound, dev <= bound, delta2_distance(lam[:k], mu[:k]))


# ---------------------------------------------------------------------------
# deterministic row-wise bound certificate
# ---------------------------------------------------------------------------

@dataclass
class BoundCertificate:
    """Numerically evaluated row-wise perturbation bound.

    ``terms`` holds ``r0, r1, r2, y0, y1``; ``events`` the three event flags;
    ``inputs`` the scalar ingredients.  ``lhs`` is the exact value of
    ``|U_hat W^T - U - E U Lambda^{-1}|_{2->inf}``.
    """

    terms: dict
    events: dict
    inputs: dict
    lhs: float
    psd_mode: bool

    @property
    def total(self) -> float:
        return float(sum(self.terms.values()))

    @property
    def events_hold(self) -> bool:
        return all(self.events.values())

    @property
    def holds(self) -> bool:
        return self.lhs <= self.total


def bernstein_constants(nu: float, n: int, rho: float) -> tuple:
    """Default ``(alpha, beta)`` for Bernoulli noise.

    ``alpha = sqrt(2(nu+2)) sqrt(rho log n)``, ``beta = (2/3)(nu+2) log n``.
    """
    logn = math.log(n)
    return (math.sqrt(2.0 * (nu + 2)) * math.sqrt(rho * logn),
            2.0 / 3.0 * (nu + 2) * logn)


def _top_block(s, r):
    vals, vecs = np.linalg.eigh(s)
    order = modulus_order(vals)
    return vals[order], vecs[:, order]


def bound_certificate(m: np.ndarray, e: np.ndarray, r: int, nu: float = 1.0,
                      rho: float = 1.0, alpha: float | None = None,
                      beta: float | None = None, psd: bool | None = None,
                      max_n: int = 300) -> BoundCertificate:
    """Evaluate the deterministic row-wise bound for ``M_hat = M + E``.

    Parameters
    ----------
    m, e : ndarray
        Symmetric signal and noise matrices.
    r : int
        Rank of the eigenvector block.
    nu, rho : float
        Set the default ``alpha`` and ``beta`` through
        :func:`bernstein_constants`.
    psd : bool, optional
        Use the simplified second-order term valid when ``M`` is positive
        semidefinite.  Detected from the spectrum when omitted.
    """
    m = np.asarray(m, dtype=float)
    e = np.asarray(e, dtype=float)
    n = m.shape[0]
    if n > max_n:
        raise ValueError(f"certificate limited to n <= {max_n}")
    if e.shape != m.shape:
        raise ValueError("M and E must have the same shape")
    a_def, b_def = bernstein_constants(nu, n, rho)
    alpha = a_def if alpha is None else alpha
    beta = b_def if beta is None else beta

    lam_all, vec_all = _top_block(m, r)
    if psd is None:
        psd = bool(lam_all.min() >= -1e-10 * max(1.0, abs(lam_all[0])))
    lam, u = lam_all[:r], vec_all[:, :r]
    lam_perp, u_perp = lam_all[r:], vec_all[:, r:]
    mhat = m + e
    lamh_all, vech_all = _top_block(mhat, r)
    lamh, uhat = lamh_all[:r], vech_all[:, :r]

    abs_r = abs(lam[r - 1])
    delta = abs_r - (abs(lam_all[r]) if r < n else 0.0)
    e_norm = float(np.abs(np.linalg.eigvalsh(e)).max()) if n else 0.0
    proj_perp = np.eye(n) - u @ u.T
    psi0 = float(np.linalg.norm(proj_perp @ uhat, 2))
    eu = e @ u
    psi1 = float(np.linalg.norm(u.T @ eu, 2))
    lam_inv = 1.0 / lam
    main = eu * lam_inv
    psi_star = two_to_inf(main)
    u_inf = two_to_inf(u)
    eu_inf = two_to_inf(eu)
    perp_eu = u_perp.T @ eu

    # leave-one-out event
    e1 = True
    worst = -math.inf
    for h in range(n):
        mh = mhat.copy()
        mh[h, :] = m[h, :]
        mh[:, h] = m[:, h]
        _, vh = _top_block(mh, r)
        v = proj_perp @ vh[:, :r]
        lhs_h = float(np.linalg.norm(e[h] @ v))
        rhs_h = alpha * float(np.linalg.norm(v)) + beta * two_to_inf(v)
        worst = max(worst, lhs_h - rhs_h)
        if lhs_h > rhs_h:
            e1 = False
    e0 = delta >= max(4.0 * e_norm, 8.0 * beta)
    # the stricter of the two readings of the eigenvalue-size event
    e2 = abs_r >= 24.0 * beta + 64.0 * max(e_norm, e_norm ** 2) / delta if delta > 0 else False

    r0 = u_inf * psi0 ** 2
    r1 = 2.0 * u_inf * (psi1 + e_norm * psi0) / abs_r
    if psd:
        sq = np.sqrt(np.clip(lam_perp, 0.0, None))
        up_half = two_to_inf(u_perp * sq) if lam_perp.size else 0.0
        eta = float(np.linalg.norm(sq[:, None] * perp_eu, 2)) if lam_perp.size else 0.0
        r2 = (2 ** 2.5 * up_half * e_norm * psi0 / (math.sqrt(abs_r) * delta)
              + 8.0 * up_half * eta / (abs_r * delta))
    else:
        up_lam = two_to_inf(u_perp * lam_perp) if lam_perp.size else 0.0
        eta = float(np.linalg.norm(lam_perp[:, None] * perp_eu, 2)) if lam_perp.size else 0.0
        cross = two_to_inf(u_perp @ (lam_perp[:, None] * perp_eu)) if lam_perp.size else 0.0
        r2 = (8.0 * up_lam * e_norm * psi0 / (abs_r * delta)
              + 4.0 * cross / abs_r ** 2
              + 16.0 * up_lam * eta / (abs_r ** 2 * delta))
    y0 = (psi_star * ((psi1 + e_norm * psi0) / (2.0 * abs_r) + psi0 ** 2)
          + 32.0 * alpha * math.sqrt(r) * e_norm / (abs_r * delta)
          + (e_norm * u_inf + eu_inf) * (16.0 * beta + 32.0 * e_norm) / (delta * abs_r))
    y1 = (24.0 * beta + 64.0 * e_norm ** 2 / delta) / abs_r * (psi_star + r1 + r2 + y0)

    try:
        align = block_signed_procrustes(u, lam, uhat, lamh)
    except ValueError:
        align = procrustes(u, uhat)
    lhs = two_to_inf(align.align(uhat) - u - main)

    terms = {"r0": float(r0), "r1": float(r1), "r2": float(r2), "y0": float(y0),
             "y1": float(y1)}
    events = {"E0": bool(e0), "E1": bool(e1), "E2": bool(e2)}
    inputs = {"E_norm": e_norm, "psi0": psi0, "psi1": psi1, "eta": eta,
              "psi_star": psi_star, "alpha": alpha, "beta": beta, "delta": delta,
              "lambda_r": float(lam[r - 1]), "loo_margin": worst}
    return BoundCertificate(terms, events, inputs, lhs, bool(psd))



def expansion_admissible(lam, n: int, rho: float, j_max: int | None = None) -> list:
    """Ranks at which the first-order expansion term should dominate.

    Population eigenvalues ``lam`` (modulus-ordered) must satisfy, with unit
    constants, ``delta_r >= max{sqrt(n rho log n), log n}`` and
    ``delta_r^4 (r + log n) >= (n rho)^2 |lambda_r|``.
    """
    mod = np.abs(np.asarray(lam, dtype=float))
    logn = math.log(n)
    j_max = j_max or default_j_max(n, mod.size)
    out = []
    for r in range(1, min(j_max, mod.size - 1) + 1):
        gap = mod[r - 1] - mod[r]
        if gap >= max(math.sqrt(n * rho * logn), logn) and \
                gap ** 4 * (r + logn) >= (n * rho) ** 2 * mod[r - 1]:
            out.append(r)
    return out
