"""Symmetric eigensolvers, matrix norms and Procrustes alignment.

Eigenvalues are always returned in decreasing modulus.  Ties in modulus are
broken by signed value (descending) and then by the original position.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .rng import STREAM_NORM, STREAM_SOLVER, make_rng

DENSE_MAX_N = 4000
SYMMETRY_TOL = 1e-12


class SolverError(RuntimeError):
    """Eigensolver failure; carries the residuals reached."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


@dataclass(frozen=True)
class SpectralDecomposition:
    """Modulus-ordered eigenpairs.

    Attributes
    ----------
    eigenvalues : ndarray, shape (k,)
    vectors : ndarray, shape (n, k)
        Orthonormal columns.
    residuals : ndarray, shape (k,)
        ``|S v_j - lambda_j v_j|``.
    method : str
        ``"dense"`` or ``"lanczos"``.
    norm_estimate : float
        Largest eigenvalue modulus seen by the solver.
    """

    eigenvalues: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    method: str
    norm_estimate: float = 0.0

    @property
    def k(self) -> int:
        return self.eigenvalues.shape[0]

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    def head(self, r: int) -> "SpectralDecomposition":
        """Leading ``r`` pairs."""
        if r > self.k:
            raise ValueError(f"requested {r} pairs but only {self.k} computed")
        return SpectralDecomposition(self.eigenvalues[:r], self.vectors[:, :r],
                                     self.residuals[:r], self.method, self.norm_estimate)


def modulus_order(values) -> np.ndarray:
    """Permutation sorting by decreasing ``|value|``, then value, then index."""
    v = np.asarray(values, dtype=float)
    idx = np.arange(v.size)
    return np.lexsort((idx, -v, -np.abs(v)))


def _residuals(apply, vals, vecs):
    r = apply(vecs) - vecs * vals
    return np.linalg.norm(r, axis=0)


def check_symmetric(s: np.ndarray) -> None:
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError("matrix must be square")
    asym = np.max(np.abs(s - s.T)) if s.size else 0.0
    if asym > SYMMETRY_TOL:
        raise ValueError(f"matrix is not symmetric (max asymmetry {asym:.3g})")


def eig_dense(s: np.ndarray, max_n: int = DENSE_MAX_N) -> SpectralDecomposition:
    """Full eigendecomposition of a symmetric matrix (LAPACK ``syevd``)."""
    s = np.asarray(s, dtype=float)
    check_symmetric(s)
    if s.shape[0] > max_n:
        raise ValueError(f"dense solver limited to n <= {max_n}")
    vals, vecs = np.linalg.eigh(s)
    order = modulus_order(vals)
    vals, vecs = vals[order], vecs[:, order]
    res = _residuals(lambda x: s @ x, vals, vecs)
    norm = float(np.abs(vals).max()) if vals.size else 0.0
    return SpectralDecomposition(vals, vecs, res, "dense", norm)


def _orthonormalize_against(block, basis, rng, tol=1e-10):
    """Orthonormalize ``block`` against ``basis`` and itself.

    Two passes of Gram-Schmidt per column.  Columns that vanish are replaced
    by random directions so the block keeps its width.
    """
    n, b = block.shape
    v = np.array(block, dtype=float)
    ref = np.linalg.norm(v, axis=0)
    if basis is not None and basis.shape[1]:
        for _ in range(2):
            v -= basis @ (basis.T @ v)
    q, r = np.linalg.qr(v)
    diag = np.abs(np.diag(r))
    if np.all(diag > tol * np.maximum(ref, 1e-300)) and np.all(ref > 0):
        if basis is not None and basis.shape[1]:
            q -= basis @ (basis.T @ q)
            q, _ = np.linalg.qr(q)
        return q
    # rank deficient: column by column with random replacements
    q = np.empty((n, 0))
    for c in range(b):
        col = v[:, c]
        for _ in range(4):
            ref_c = np.linalg.norm(col)
            for _ in range(2):
                if basis is not None and basis.shape[1]:
                    col = col - basis @ (basis.T @ col)
                if q.shape[1]:
                    col = col - q @ (q.T @ col)
            nv = np.linalg.norm(col)
            if ref_c > 0 and nv > tol * ref_c:
                q = np.column_stack([q, col / nv])
                break
            col = rng.standard_normal(n)
        else:
            raise SolverError("could not extend the Krylov basis")
    return q


def eig_topk_lanczos(matvec: Callable[[np.ndarray], np.ndarray], n: int, k: int,
                     tol: float = 1e-10, seed: int = 0, block: int | None = None,
                     max_basis: int | None = None, max_restarts: int = 1000,
                     strict: bool = True) -> SpectralDecomposition:
    """Top-``k`` eigenpairs by modulus of a symmetric operator.

    Thick-restart block Lanczos with full reorthogonalization.  The basis and
    its image under the operator are stored explicitly; each cycle performs a
    Rayleigh-Ritz projection, keeps the leading Ritz vectors (converged pairs
    stay locked in the basis) and continues the Krylov expansion from the
    residual block of the leading unconverged pairs.

    Parameters
    ----------
    matvec : callable
        Maps an ``(n, b)`` array to the operator applied column-wise.
    tol : float
        Convergence when every residual is at most ``tol`` times the largest
        Ritz value modulus.
    """
    if not 1 <= k <= n:
        raise ValueError("need 1 <= k <= n")
    rng = make_rng(seed, STREAM_SOLVER)
    b = block or min(max(2, k // 2), 8)
    b = min(b, n)
    m = max_basis or max(4 * k + 2 * b, 60)
    m = min(m, n)
    keep = min(max(k + b, (m + k) // 2), m - b) if m < n else m

    v = _orthonormalize_against(rng.standard_normal((n, b)), None, rng)
    av = np.asarray(matvec(v), dtype=float)
    last = v
    last_av = av
    res = None
    for _ in range(max_restarts + 1):
        # expand
        while v.shape[1] < m:
            width = min(b, m - v.shape[1])
            new = _orthonormalize_against(last_av[:, :width], v, rng)
            new_av = np.asarray(matvec(new), dtype=float)
            v = np.column_stack([v, new])
            av = np.column_stack([av, new_av])
            last, last_av = new, new_av
        h = v.T @ av
        h = 0.5 * (h + h.T)
        theta, q = np.linalg.eigh(h)
        order = modulus_order(theta)
        theta, q = theta[order], q[:, order]
        y = v @ q
        ay = av @ q
        resid = ay - y * theta
        res = np.linalg.norm(resid, axis=0)
        norm = float(np.abs(theta).max()) if theta.size else 0.0
        if m == n or np.all(res[:k] <= tol * norm):
            out = SpectralDecomposition(theta[:k].copy(), y[:, :k].copy(), res[:k].copy(),
                                        "lanczos", norm)
            return out
        # thick restart
        v, av = y[:, :keep], ay[:, :keep]
        pending = np.flatnonzero(res[:keep] > tol * norm)
        pick = pending[:b] if pending.size else np.arange(min(b, keep))
        last_av = resid[:, pick]
    msg = f"Lanczos did not converge; residuals {res[:k]}"
    if strict:
        raise SolverError(msg, res[:k])
    return SpectralDecomposition(theta[:k].copy(), y[:, :k].copy(), res[:k].copy(),
                                 "lanczos", norm)


def dense_matvec(s: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
    return lambda x: s @ x


def top_eigenpairs(s: np.ndarray, k: int, seed: int = 0, tol: float = 1e-10,
                   dense_below: int = 600) -> SpectralDecomposition:
    """Top-``k`` pairs of a dense symmetric matrix, choosing the solver by size."""
    n = s.shape[0]
    if n <= dense_below or 4 * k > n:
        return eig_dense(s, max_n=max(DENSE_MAX_N, n)).head(min(k, n))
    check_symmetric(s[:64, :64])
    return eig_topk_lanczos(dense_matvec(s), n, k, tol=tol, seed=seed)


def matrix_norms(m) -> dict:
    """Two-to-infinity, Frobenius, max-entry and max-row-sum norms."""
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    if m.size == 0:
        return {"two_to_inf": 0.0, "frobenius": 0.0, "max_abs": 0.0, "inf_row_sum": 0.0}
    return {
        "two_to_inf": float(np.sqrt((m * m).sum(axis=1)).max()),
        "frobenius": float(np.linalg.norm(m)),
        "max_abs": float(np.abs(m).max()),
        "inf_row_sum": float(np.abs(m).sum(axis=1).max()),
    }


def two_to_inf(m) -> float:
    m = np.atleast_2d(np.asarray(m, dtype=float))
    return float(np.sqrt((m * m).sum(axis=1)).max()) if m.size else 0.0


def spectral_norm(matvec: Callable[[np.ndarray], np.ndarray], n: int, tol: float = 1e-8,
                  seed: int = 0) -> float:
    """Largest eigenvalue modulus of a symmetric operator.

    Krylov iteration (a superset of power iteration that separates ``+x`` from
    ``-x`` at the two spectral edges) stopped once the Rayleigh residual of
    the leading pair is at most ``tol`` times its value.
    """
    probe = matvec(make_rng(seed, STREAM_NORM).standard_normal((n, 1)))
    if not np.any(probe):
        z = matvec(np.eye(n)[:, :min(n, 8)])
        if not np.any(z):
            return 0.0
    dec = eig_topk_lanczos(matvec, n, 1, tol=tol, seed=seed, block=2,
                           max_basis=min(n, 80))
    return float(abs(dec.eigenvalues[0]))


def symmetric_norm(s: np.ndarray) -> float:
    """Spectral norm of a dense symmetric matrix via :func:`spectral_norm`."""
    return spectral_norm(dense_matvec(s), s.shape[0])


# ---------------------------------------------------------------------------
# Procrustes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AlignmentResult:
    """Orthogonal ``W`` with ``U_hat ~ U W``.

    ``sign_blocks`` holds the column indices of the positive and negative
    eigenvalue groups; ``signs`` is the diagonal of ``J`` with
    ``Lambda = |Lambda| J``.
    """

    W: np.ndarray
    sign_blocks: tuple
    frobenius_misfit: float
    signs: np.ndarray

    def align(self, uhat: np.ndarray) -> np.ndarray:
        """``U_hat W^T``, the sample block rotated onto the population block."""
        return uhat @ self.W.T


def polar_factor(m: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Orthogonal polar factor of a square matrix.

    Directions with zero singular value are completed by the orthogonal map
    closest to the identity between the two null spaces.
    """
    m = np.atleast_2d(m)
    r = m.shape[0]
    if r == 0:
        return np.zeros((0, 0))
    a, s, bt = np.linalg.svd(m)
    big = s > tol * max(1.0, s[0] if s.size else 0.0)
    w = a[:, big] @ bt[big]
    if not big.all():
        a0, b0 = a[:, ~big], bt[~big].T
        cross = a0.T @ b0
        ca, cs, cbt = np.linalg.svd(cross)
        rot = ca @ cbt if cs.min() > tol else np.eye(cross.shape[0])
        w = w + a0 @ rot @ b0.T
    return w


def procrustes(u: np.ndarray, uhat: np.ndarray) -> AlignmentResult:
    """Orthogonal ``W`` minimizing ``|U_hat - U W|_F``."""
    u, uhat = np.atleast_2d(u), np.atleast_2d(uhat)
    if u.shape[1] != uhat.shape[1]:
        raise ValueError("column counts differ")
    w = polar_factor(u.T @ uhat)
    r = u.shape[1]
    misfit = float(np.linalg.norm(uhat - u @ w))
    return AlignmentResult(w, (np.arange(r), np.arange(0)), misfit, np.ones(r))


def block_signed_procrustes(u, lam, uhat, lamhat) -> AlignmentResult:
    """Procrustes alignment restricted to same-sign eigenvalue groups.

    ``W = diag(W+, W-)`` where each block aligns the eigenvectors whose
    eigenvalues share a sign.  Zero counts as positive.
    """
    lam, lamhat = np.asarray(lam, dtype=float), np.asarray(lamhat, dtype=float)
    if lam.shape != lamhat.shape or u.shape[1] != lam.size or uhat.shape[1] != lam.size:
        raise ValueError("shapes of eigenvalues and eigenvectors disagree")
    neg = lam < 0
    if not np.array_equal(neg, lamhat < 0):
        raise ValueError("sign patterns of the two eigenvalue lists differ")
    pos_idx, neg_idx = np.flatnonzero(~neg), np.flatnonzero(neg)
    r = lam.size
    w = np.zeros((r, r))
    for idx in (pos_idx, neg_idx):
        if idx.size:
            w[np.ix_(idx, idx)] = procrustes(u[:, idx], uhat[:, idx]).W
    misfit = float(np.linalg.norm(uhat - u @ w))
    signs = np.where(neg, -1.0, 1.0)
    return AlignmentResult(w, (pos_idx, neg_idx), misfit, signs)


def delta2_distance(v, w) -> float:
    """Minimum over bijections of the squared mismatch of two sequences.

    Both sequences are zero-padded to a common length; pairing them after a
    descending sort is optimal for squared loss.
    """
    v = np.asarray(v, dtype=float).ravel()
    w = np.asarray(w, dtype=float).ravel()
    size = max(v.size, w.size)
    a = np.zeros(size)
    b = np.zeros(size)
    a[:v.size] = v
    b[:w.size] = w
    a = np.sort(a)[::-1]
    b = np.sort(b)[::-1]
    return float(np.sum((a - b) ** 2))
