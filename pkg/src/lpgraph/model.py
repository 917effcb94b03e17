"""Latent position graphs: kernels, latent distributions, P and A.

A graph on ``n`` vertices is generated in three steps.  Latent positions
``X_1, ..., X_n`` are drawn i.i.d. from a distribution ``F``.  The edge
probability matrix is ``P_ij = rho * kappa(X_i, X_j)``.  Edges ``a_ij`` for
``i <= j`` are then independent Bernoulli(``P_ij``) variables, symmetrized.
Self-loops are sampled by default; pass ``hollow=True`` to zero the diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .rng import STREAM_ADJACENCY, STREAM_LATENT, STREAM_PLACE, make_rng

RANGE_TOL = 1e-12
_BLOCK = 512


class ModelError(ValueError):
    """Raised on invalid model configuration."""


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KernelSpec:
    """Symmetric link function with values in [0, 1].

    Use the constructors :meth:`laplace`, :meth:`gaussian`,
    :meth:`dot_product` and :meth:`constant`.

    Parameters
    ----------
    variant : str
        One of ``"laplace"``, ``"gaussian"``, ``"dot"``, ``"constant"``.
    scale : float
        Length scale for Laplace (``exp(-|x-y|/scale)``) or squared bandwidth
        for Gaussian (``exp(-|x-y|^2/scale)``).  For Constant it holds ``c``.
    matrix : ndarray, optional
        Symmetric ``d x d`` matrix of the DotProduct kernel ``x^T M y``.
    """

    variant: str
    scale: float = 1.0
    matrix: np.ndarray | None = field(default=None, compare=False)

    @classmethod
    def laplace(cls, scale: float = 1.0) -> "KernelSpec":
        if not scale > 0:
            raise ModelError("Laplace scale must be positive")
        return cls("laplace", float(scale))

    @classmethod
    def gaussian(cls, bandwidth2: float) -> "KernelSpec":
        if not bandwidth2 > 0:
            raise ModelError("Gaussian bandwidth must be positive")
        return cls("gaussian", float(bandwidth2))

    @classmethod
    def dot_product(cls, matrix) -> "KernelSpec":
        m = np.array(matrix, dtype=float, ndmin=2)
        if m.shape[0] != m.shape[1] or not np.array_equal(m, m.T):
            raise ModelError("DotProduct matrix must be square and symmetric")
        m.setflags(write=False)
        return cls("dot", 1.0, m)

    @classmethod
    def constant(cls, c: float) -> "KernelSpec":
        if not 0.0 <= c <= 1.0:
            raise ModelError("Constant kernel value must lie in [0, 1]")
        return cls("constant", float(c))

    @property
    def is_psd(self) -> bool:
        """True when every Gram matrix of the kernel is positive semidefinite."""
        if self.variant == "dot":
            return bool(np.linalg.eigvalsh(self.matrix).min() >= -1e-12)
        return True

    def evaluate(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Kernel matrix ``K[a, b] = kappa(x[a], y[b])``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.atleast_2d(np.asarray(y, dtype=float))
        if self.variant == "laplace":
            k = cdist(x, y, "euclidean")
            k /= -self.scale
            np.exp(k, out=k)
        elif self.variant == "gaussian":
            k = cdist(x, y, "sqeuclidean")
            k /= -self.scale
            np.exp(k, out=k)
        elif self.variant == "dot":
            if x.shape[1] != self.matrix.shape[0]:
                raise ModelError("latent dimension does not match DotProduct matrix")
            k = x @ self.matrix @ y.T
        elif self.variant == "constant":
            k = np.full((x.shape[0], y.shape[0]), self.scale)
        else:
            raise ModelError(f"unknown kernel variant {self.variant!r}")
        return k

    def gram(self, x: np.ndarray) -> np.ndarray:
        """Exactly symmetric kernel matrix of the rows of ``x``."""
        k = self.evaluate(x, x)
        mirror_upper(k)
        return k


def mirror_upper(m: np.ndarray) -> None:
    """Copy the upper triangle of a square array onto its lower triangle, in place."""
    n = m.shape[0]
    for r0 in range(0, n, _BLOCK):
        r1 = min(n, r0 + _BLOCK)
        m[r0:r1, :r0] = m[:r0, r0:r1].T
        blk = m[r0:r1, r0:r1]
        il = np.tril_indices(r1 - r0, -1)
        blk[il] = blk.T[il]


# ---------------------------------------------------------------------------
# latent positions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LatentDistribution:
    """Distribution of latent positions.

    ``sphere``: uniform on the unit sphere of R^d.  ``normal``: standard
    normal on R^d.  ``cloud``: a fixed finite point set; a sample of the same
    size returns the points verbatim, any other size draws rows uniformly
    with replacement.
    """

    variant: str
    dim: int
    points: np.ndarray | None = field(default=None, compare=False)

    @classmethod
    def uniform_sphere(cls, dim: int) -> "LatentDistribution":
        return cls("sphere", int(dim))

    @classmethod
    def standard_normal(cls, dim: int) -> "LatentDistribution":
        return cls("normal", int(dim))

    @classmethod
    def point_cloud(cls, points) -> "LatentDistribution":
        pts = np.array(points, dtype=float, ndmin=2)
        if pts.ndim != 2 or not np.all(np.isfinite(pts)):
            raise ModelError("point cloud must be a finite 2-d array")
        pts.setflags(write=False)
        return cls("cloud", pts.shape[1], pts)


@dataclass(frozen=True)
class LatentSample:
    """Latent positions ``coords`` (n x d) with the seed that produced them."""

    coords: np.ndarray
    seed: int
    distribution: LatentDistribution

    @property
    def n(self) -> int:
        return self.coords.shape[0]


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def sample_latents(dist: LatentDistribution, n: int, seed: int) -> LatentSample:
    """Draw ``n`` i.i.d. latent positions from ``dist``."""
    if n < 2:
        raise ModelError("need at least two vertices")
    if dist.dim < 1:
        raise ModelError("latent dimension must be at least 1")
    rng = make_rng(seed, STREAM_LATENT)
    if dist.variant == "sphere":
        x = rng.standard_normal((n, dist.dim))
        x /= np.linalg.norm(x, axis=1, keepdims=True)
    elif dist.variant == "normal":
        x = rng.standard_normal((n, dist.dim))
    elif dist.variant == "cloud":
        if dist.points.shape[0] == n:
            x = np.array(dist.points)
        else:
            x = dist.points[rng.integers(0, dist.points.shape[0], size=n)].copy()
    else:
        raise ModelError(f"unknown latent distribution {dist.variant!r}")
    return LatentSample(_frozen(x), int(seed), dist)


def place_pair_at_distance(sample: LatentSample, i: int, j: int, eps: float,
                           seed: int) -> LatentSample:
    """Move ``X_j`` so that ``|X_j - X_i| = eps``.

    On the sphere ``X_j`` is obtained by rotating ``X_i`` along a uniformly
    random tangent direction until the chord length is ``eps``.  In flat space
    ``X_j = X_i + eps * u`` with ``u`` a uniformly random unit vector.
    """
    if i == j:
        raise ModelError("i and j must differ")
    if eps < 0:
        raise ModelError("eps must be nonnegative")
    x = np.array(sample.coords)
    xi = x[i]
    rng = make_rng(seed, STREAM_PLACE)
    d = x.shape[1]
    if eps == 0:
        x[j] = xi
    elif sample.distribution.variant == "sphere":
        if eps > 2:
            raise ModelError("chord length on the unit sphere cannot exceed 2")
        if d < 2:
            raise ModelError("the 0-sphere admits only eps in {0, 2}")
        t = rng.standard_normal(d)
        t -= (t @ xi) * xi
        t /= np.linalg.norm(t)
        theta = 2.0 * np.arcsin(eps / 2.0)
        xj = np.cos(theta) * xi + np.sin(theta) * t
        x[j] = xj / np.linalg.norm(xj)
    else:
        u = rng.standard_normal(d)
        x[j] = xi + eps * u / np.linalg.norm(u)
    return LatentSample(_frozen(x), sample.seed, sample.distribution)


# ---------------------------------------------------------------------------
# edge probabilities and adjacency
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EdgeProbabilityMatrix:
    """Dense symmetric ``P`` with entries in ``[0, rho]``."""

    entries: np.ndarray
    rho: float

    @property
    def n(self) -> int:
        return self.entries.shape[0]


def build_p(sample: LatentSample, kernel: KernelSpec, rho: float) -> EdgeProbabilityMatrix:
    """Edge probability matrix ``P_ij = rho * kappa(X_i, X_j)``."""
    if not 0 < rho <= 1:
        raise ModelError("rho must lie in (0, 1]")
    k = kernel.gram(sample.coords)
    lo, hi = k.min(), k.max()
    if lo < -RANGE_TOL or hi > 1 + RANGE_TOL:
        raise ModelError(f"kernel values outside [0, 1]: min {lo:.6g}, max {hi:.6g}")
    np.clip(k, 0.0, 1.0, out=k)
    if rho != 1.0:
        k *= rho
    return EdgeProbabilityMatrix(_frozen(k), float(rho))


def _tri_offsets(n: int) -> np.ndarray:
    i = np.arange(n + 1, dtype=np.int64)
    return i * (i + 1) // 2


@dataclass(frozen=True, eq=False)
class Adjacency:
    """Symmetric 0/1 adjacency stored as a bit-packed lower triangle.

    Bits follow the row-major order of ``(i, j)`` with ``j <= i``, diagonal
    included.
    """

    bits: np.ndarray
    n: int
    hollow: bool = False

    def __eq__(self, other):
        return (isinstance(other, Adjacency) and self.n == other.n
                and np.array_equal(self.bits, other.bits))

    def __hash__(self):
        return hash((self.n, self.bits.tobytes()))

    def triangle(self) -> np.ndarray:
        """Lower triangle (diagonal included) as a flat uint8 array."""
        count = self.n * (self.n + 1) // 2
        return np.unpackbits(self.bits, count=count)

    def dense(self, dtype=np.float64) -> np.ndarray:
        """Unpack to a dense symmetric array."""
        n = self.n
        tri = self.triangle()
        off = _tri_offsets(n)
        a = np.zeros((n, n), dtype=dtype)
        for i in range(n):
            a[i, :i + 1] = tri[off[i]:off[i + 1]]
        # lower -> upper
        for r0 in range(0, n, _BLOCK):
            r1 = min(n, r0 + _BLOCK)
            a[:r0, r0:r1] = a[r0:r1, :r0].T
            blk = a[r0:r1, r0:r1]
            iu = np.triu_indices(r1 - r0, 1)
            blk[iu] = blk.T[iu]
        return a

    def degree_total(self) -> int:
        """``sum_ij a_ij`` (each off-diagonal edge counted twice)."""
        tri = self.triangle()
        diag = int(tri[_tri_offsets(self.n)[1:] - 1].sum())
        return 2 * int(tri.sum()) - diag

    def average_degree(self) -> float:
        """``d_ave = n^{-1} sum_i sum_j a_ij``."""
        return self.degree_total() / self.n

    def edges(self) -> np.ndarray:
        """Sorted array of pairs ``(i, j)`` with ``i <= j`` and ``a_ij = 1``."""
        tri = self.triangle()
        k = np.flatnonzero(tri)
        off = _tri_offsets(self.n)
        row = np.searchsorted(off, k, side="right") - 1
        col = k - off[row]
        pairs = np.column_stack([col, row]).astype(np.int64)
        order = np.lexsort((pairs[:, 1], pairs[:, 0]))
        return pairs[order]

    @classmethod
    def from_dense(cls, a, hollow: bool = False) -> "Adjacency":
        a = np.asarray(a)
        n = a.shape[0]
        if a.shape != (n, n) or not np.array_equal(a, a.T):
            raise ModelError("adjacency must be square and symmetric")
        if not np.all((a == 0) | (a == 1)):
            raise ModelError("adjacency entries must be 0 or 1")
        tri = a[np.tril_indices(n)].astype(np.uint8)
        return cls(_frozen(np.packbits(tri)), n, hollow)

    @classmethod
    def from_edges(cls, n: int, edges, hollow: bool = False) -> "Adjacency":
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if e.size and (e.min() < 0 or e.max() >= n):
            raise ModelError("edge endpoint out of range")
        lo = np.minimum(e[:, 0], e[:, 1])
        hi = np.maximum(e[:, 0], e[:, 1])
        tri = np.zeros(n * (n + 1) // 2, dtype=np.uint8)
        tri[_tri_offsets(n)[hi] + lo] = 1
        if hollow:
            tri[_tri_offsets(n)[1:] - 1] = 0
        return cls(_frozen(np.packbits(tri)), n, hollow)


def sample_adjacency(p: EdgeProbabilityMatrix, seed: int, hollow: bool = False) -> Adjacency:
    """Draw ``a_ij ~ Bernoulli(P_ij)`` independently for ``i <= j``."""
    rng = make_rng(seed, STREAM_ADJACENCY)
    n = p.n
    entries = p.entries
    off = _tri_offsets(n)
    tri = np.empty(off[-1], dtype=bool)
    for i in range(n):
        u = rng.random(i + 1)
        np.less(u, entries[i, :i + 1], out=tri[off[i]:off[i + 1]])
    if hollow:
        tri[off[1:] - 1] = False
    return Adjacency(_frozen(np.packbits(tri)), n, hollow)


def nystrom_spectrum(kernel: KernelSpec, dist: LatentDistribution, m: int, k: int,
                     seed: int) -> np.ndarray:
    """Top-``k`` operator eigenvalue estimates ``mu_j``.

    Eigenvalues of the ``m x m`` kernel Gram matrix of a latent sample,
    divided by ``m``, in decreasing modulus.
    """
    from .linalg import top_eigenpairs

    if not 1 <= k <= m:
        raise ModelError("need 1 <= k <= m")
    x = sample_latents(dist, m, seed).coords
    g = kernel.gram(x)
    dec = top_eigenpairs(g, k, seed=seed)
    return dec.eigenvalues / m
