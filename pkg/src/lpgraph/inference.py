"""Spectral embeddings, edge-probability estimation and expansion diagnostics."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .linalg import AlignmentResult, SpectralDecomposition, block_signed_procrustes, two_to_inf
from .theory import vartheta

SCALINGS = (0.0, 0.5, 1.0)


@dataclass(frozen=True)
class EmbeddingSet:
    """Rows of ``U_hat |Lambda_hat|^alpha`` for the leading ``r`` pairs."""

    alpha: float
    matrix: np.ndarray
    source: SpectralDecomposition


def _check_alpha(alpha):
    alpha = float(alpha)
    if alpha not in SCALINGS:
        raise ValueError("alpha must be one of 0, 1/2, 1")
    return alpha


def embed(decomp: SpectralDecomposition, r: int, alpha: float) -> EmbeddingSet:
    """Scale column ``j`` of the eigenvector block by ``|lambda_j|^alpha``."""
    alpha = _check_alpha(alpha)
    d = decomp.head(r)
    if alpha == 0:
        mat = d.vectors.copy()
    else:
        mat = d.vectors * np.abs(d.eigenvalues) ** alpha
    return EmbeddingSet(alpha, mat, d)


def estimate_p(decomp: SpectralDecomposition, r: int, clip: bool = False) -> np.ndarray:
    """Rank-``r`` estimate ``U_hat Lambda_hat U_hat^T``."""
    d = decomp.head(r)
    phat = (d.vectors * d.eigenvalues) @ d.vectors.T
    if clip:
        np.clip(phat, 0.0, 1.0, out=phat)
    return phat


def entrywise_error(phat: np.ndarray, p: np.ndarray, rho: float) -> dict:
    """``rho^{-1} |P_hat - P|_max`` and ``(n rho)^{-1} |P_hat - P|_F``."""
    if phat.shape != p.shape:
        raise ValueError("shape mismatch")
    diff = phat - p
    n = p.shape[0]
    return {"max_norm_scaled": float(np.abs(diff).max()) / rho,
            "frobenius_scaled": float(np.linalg.norm(diff)) / (n * rho)}


def best_rank_error(p_decomp: SpectralDecomposition, p: np.ndarray, r: int, rho: float) -> float:
    """``rho^{-1} |P_r - P|_max`` with ``P_r`` the rank-``r`` truncation of ``P``."""
    return entrywise_error(estimate_p(p_decomp, r), p, rho)["max_norm_scaled"]


@dataclass
class ExpansionReport:
    """Two-to-infinity norms of the first-order expansion of an embedding.

    ``aligned_error`` is ``|aligned - target|``, ``main_term`` the norm of the
    linear term in ``E`` and ``residual`` the norm of the remainder ``Q``.
    ``identity_gap`` is the max-entry size of ``aligned - target - main - Q``,
    zero up to rounding.
    """

    alpha: float
    r: int
    main_term_2toinf: float
    residual_2toinf: float
    aligned_error_2toinf: float
    theory_bound: float
    alignment: AlignmentResult
    identity_gap: float

    @property
    def dominated(self) -> bool:
        return self.residual_2toinf < self.main_term_2toinf

    @property
    def bound_holds(self) -> bool:
        return self.main_term_2toinf <= self.theory_bound


def _scaled(values, alpha):
    if alpha == 0:
        return np.ones_like(values)
    return np.abs(values) ** alpha


def expansion_terms(a_decomp, p_decomp, e, r, alpha):
    """Return ``(aligned, target, main, alignment)`` for scaling ``alpha``.

    With ``J`` the sign pattern of ``Lambda`` the main term is
    ``E U Lambda^{-1} |Lambda|^alpha``, which equals ``E U |Lambda|^{alpha-1} J``.
    For ``alpha = 1`` the signed eigenvalues are used on both sides, so the
    decomposition reads ``U_hat Lambda_hat W^T - U Lambda = E U + Q``.
    """
    alpha = _check_alpha(alpha)
    a = a_decomp.head(r)
    p = p_decomp.head(r)
    align = block_signed_procrustes(p.vectors, p.eigenvalues, a.vectors, a.eigenvalues)
    lam, lamh = p.eigenvalues, a.eigenvalues
    if alpha == 1:
        aligned = align.align(a.vectors * lamh)
        target = p.vectors * lam
    else:
        aligned = align.align(a.vectors * _scaled(lamh, alpha))
        target = p.vectors * _scaled(lam, alpha)
    main = (e @ p.vectors) * (_scaled(lam, alpha) / lam)
    return aligned, target, main, align


def main_term_bound(lam_r: float, r: int, n: int, rho: float, alpha: float,
                    nu: float = 1.0) -> float:
    """``(11/2) rho^{1/2} |lambda_r|^{alpha-1} sqrt(vartheta(nu+1, r, n))``."""
    return 5.5 * math.sqrt(rho) * abs(lam_r) ** (alpha - 1.0) * math.sqrt(vartheta(nu + 1, r, n))


def verify_expansion(a_decomp: SpectralDecomposition, p_decomp: SpectralDecomposition,
                     p: np.ndarray, a: np.ndarray, r: int, alpha: float = 0.5,
                     rho: float = 1.0, nu: float = 1.0) -> ExpansionReport:
    """Split the aligned embedding error into main term and remainder.

    ``Q`` is the exact difference ``aligned - target - main``.
    """
    e = np.asarray(a, dtype=float) - np.asarray(p, dtype=float)
    aligned, target, main, align = expansion_terms(a_decomp, p_decomp, e, r, alpha)
    q = aligned - target - main
    gap = float(np.abs(aligned - target - main - q).max())
    n = p.shape[0]
    bound = main_term_bound(p_decomp.eigenvalues[r - 1], r, n, rho, float(alpha), nu)
    return ExpansionReport(float(alpha), r, two_to_inf(main), two_to_inf(q),
                           two_to_inf(aligned - target), bound, align, gap)


@dataclass
class RowwiseDiagnostics:
    """Covariance ``Sigma_i`` and standardized residual of vertex ``i``."""

    i: int
    sigma: np.ndarray
    residual: np.ndarray
    standardized_residual: np.ndarray


def row_covariance(p: np.ndarray, p_decomp: SpectralDecomposition, r: int, i: int) -> np.ndarray:
    """``Sigma_i = D (sum_k p_ik (1 - p_ik) U_k U_k^T) D`` with ``D = Lambda^{-1}|Lambda|^{1/2}``.

    For positive eigenvalues ``D = |Lambda|^{-1/2}``; negative ones only flip
    the sign of the matching row and column.
    """
    d = p_decomp.head(r)
    u = d.vectors
    w = p[i] * (1.0 - p[i])
    inner = (u * w[:, None]).T @ u
    scale = np.sqrt(np.abs(d.eigenvalues)) / d.eigenvalues
    sigma = scale[:, None] * inner * scale[None, :]
    return 0.5 * (sigma + sigma.T)


def inverse_sqrt(s: np.ndarray, floor_ratio: float = 1e-12) -> np.ndarray:
    """Symmetric inverse square root with eigenvalue floor ``floor_ratio * trace``."""
    vals, vecs = np.linalg.eigh(s)
    floor = floor_ratio * max(np.trace(s), 0.0)
    if vals.min() <= floor:
        raise np.linalg.LinAlgError("covariance is singular")
    return (vecs / np.sqrt(vals)) @ vecs.T


def rowwise_diagnostics(p: np.ndarray, p_decomp: SpectralDecomposition,
                        a_decomp: SpectralDecomposition, r: int, i: int) -> RowwiseDiagnostics:
    """Standardize row ``i`` of the aligned ``alpha = 1/2`` embedding error."""
    sigma = row_covariance(p, p_decomp, r, i)
    a = a_decomp.head(r)
    d = p_decomp.head(r)
    align = block_signed_procrustes(d.vectors, d.eigenvalues, a.vectors, a.eigenvalues)
    row_hat = a.vectors[i] * np.sqrt(np.abs(a.eigenvalues))
    resid = align.W @ row_hat - d.vectors[i] * np.sqrt(np.abs(d.eigenvalues))
    z = inverse_sqrt(sigma) @ resid
    return RowwiseDiagnostics(i, sigma, resid, z)


def warn_if_inadmissible(r: int, admissible) -> None:
    if admissible is not None and r not in admissible:
        warnings.warn(f"rank {r} is not admissible under the selection rule", stacklevel=2)
