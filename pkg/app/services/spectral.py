import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh
from scipy.spatial.distance import cdist

from app.services.matcore import sym_eig
from app.utils import config
from app.utils.errors import ConfigError, DataError
from app.utils.models import GraphConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AffinityGraph:
    n: int
    weights: sp.csr_matrix  # symmetric, zero diagonal
    degree: np.ndarray

    def edge_set(self) -> set[tuple[int, int]]:
        coo = sp.triu(self.weights, k=1).tocoo()
        return {(int(i), int(j)) for i, j in zip(coo.row, coo.col)}


@dataclass(frozen=True)
class SpectralBasis:
    m: int
    eigvecs: np.ndarray  # N_s x m, orthonormal
    eigvals: np.ndarray  # ascending, within [0, 2]
    penalty_weights: np.ndarray  # sqrt(eigvals)

    @property
    def n_samples(self) -> int:
        return self.eigvecs.shape[0]

    def attributes(self, alpha: np.ndarray) -> np.ndarray:
        """Y~ = (V_m alpha)^T, a k x N_s matrix."""
        return (self.eigvecs @ alpha).T

    def l1_penalty(self, alpha: np.ndarray) -> float:
        """sum_j sum_i sqrt(Sigma_ii) |alpha_ij|, equal to ||B V_m alpha||_1."""
        return float(np.sum(self.penalty_weights[:, None] * np.abs(alpha)))

    def quadratic_penalty(self, alpha: np.ndarray) -> float:
        """sum_j sum_i Sigma_ii alpha_ij^2, equal to ||B V_m alpha||_F^2."""
        return float(np.sum(self.eigvals[:, None] * alpha**2))

    def b_matrix(self) -> np.ndarray:
        """B = Sigma^(1/2) V^T. Only meaningful for a complete basis (m = N_s)."""
        if self.m != self.n_samples:
            raise ConfigError(f"B needs the full basis, have m={self.m} of {self.n_samples}")
        return self.penalty_weights[:, None] * self.eigvecs.T


# ---------- graph ----------

def _knn_block(points: np.ndarray, rows: np.ndarray, k_g: int) -> tuple[np.ndarray, np.ndarray]:
    sq = cdist(points[rows], points, "sqeuclidean")
    sq[np.arange(len(rows)), rows] = np.inf  # no self loops
    # stable sort: equal distances resolve to the lower index
    nbrs = np.argsort(sq, axis=1, kind="stable")[:, :k_g]
    return nbrs, np.take_along_axis(sq, nbrs, axis=1)


def build_knn_affinity(X: np.ndarray, cfg: GraphConfig, workers: int = 1) -> AffinityGraph:
    """
    k_g-NN Gaussian affinity graph over the columns of X (d x N_s):
    a_ij = exp(-||x_i - x_j||^2 / (2 sigma^2)), symmetrized by union.
    With cfg.dense every pair is kept.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[1]
    if n < 2:
        raise DataError(f"affinity graph needs at least 2 points, got {n}")
    points = X.T

    if cfg.dense:
        sq = cdist(points, points, "sqeuclidean")
        A = np.exp(-sq / (2.0 * cfg.sigma**2))
        np.fill_diagonal(A, 0.0)
        weights = sp.csr_matrix(A)
    else:
        if cfg.k_g >= n:
            raise ConfigError(f"k_g={cfg.k_g} must be smaller than the number of points {n}")

        blocks = np.array_split(np.arange(n), max(1, min(workers, n)))
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                parts = list(pool.map(lambda rows: _knn_block(points, rows, cfg.k_g), blocks))
        else:
            parts = [_knn_block(points, rows, cfg.k_g) for rows in blocks]

        nbrs = np.vstack([p[0] for p in parts])
        sq = np.vstack([p[1] for p in parts])
        rows = np.repeat(np.arange(n), cfg.k_g)
        vals = np.exp(-sq.ravel() / (2.0 * cfg.sigma**2))
        directed = sp.csr_matrix((vals, (rows, nbrs.ravel())), shape=(n, n))
        weights = directed.maximum(directed.T).tocsr()

    weights.eliminate_zeros()
    degree = np.asarray(weights.sum(axis=1)).ravel()
    logger.debug("affinity graph: n=%d, edges=%d", n, weights.nnz // 2)
    return AffinityGraph(n=n, weights=weights, degree=degree)


def normalized_laplacian(G: AffinityGraph) -> sp.csr_matrix:
    """L = I - D^(-1/2) A D^(-1/2)."""
    isolated = np.flatnonzero(G.degree <= 0)
    if isolated.size:
        raise DataError(f"isolated node {int(isolated[0])} (degree 0) in affinity graph")
    d_inv_sqrt = sp.diags(1.0 / np.sqrt(G.degree))
    L = sp.identity(G.n, format="csr") - d_inv_sqrt @ G.weights @ d_inv_sqrt
    return ((L + L.T) / 2.0).tocsr()


# ---------- spectral basis ----------

def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip each column so its largest-magnitude component (first on ties) is positive."""
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def _lanczos_smallest(L: sp.spmatrix, m: int) -> tuple[np.ndarray, np.ndarray]:
    # the spectrum of L lies in [0, 2], so the top of 2I - L is the bottom of L
    n = L.shape[0]
    shifted = 2.0 * sp.identity(n, format="csr") - sp.csr_matrix(L)
    # deterministic ARPACK start
    v0 = np.random.default_rng(0).standard_normal(n)
    mu, vecs = eigsh(shifted, k=m, which="LA", v0=v0)
    vals = 2.0 - mu
    order = np.argsort(vals, kind="stable")
    return vals[order], vecs[:, order]


def spectral_basis(L, m: int, method: str = "auto") -> SpectralBasis:
    """
    The m smallest eigenpairs of the normalized Laplacian L, ascending.

    Sign convention: each eigenvector is flipped so that its largest-magnitude
    component is positive (the first such component on ties). Both the dense
    and the Lanczos paths are deterministic.
    """
    n = L.shape[0]
    if not 1 <= m <= n:
        raise ConfigError(f"basis size m={m} must lie in [1, {n}]")

    if method == "auto":
        method = "dense" if n <= config.DENSE_EIG_LIMIT else "lanczos"
    if method == "lanczos" and m >= n - 1:
        logger.info("m=%d too close to N_s=%d for Lanczos, using the dense solver", m, n)
        method = "dense"

    if method == "lanczos":
        vals, vecs = _lanczos_smallest(L, m)
    else:
        dense = L.toarray() if sp.issparse(L) else np.asarray(L, dtype=np.float64)
        pair = sym_eig(dense)
        vals, vecs = pair.values[:m], pair.vectors[:, :m]

    vals = np.clip(vals, 0.0, 2.0)
    vecs = _fix_signs(vecs)
    return SpectralBasis(m=m, eigvecs=vecs, eigvals=vals, penalty_weights=np.sqrt(vals))


def build_basis(X: np.ndarray, cfg: GraphConfig, workers: int = 1) -> SpectralBasis:
    """Algorithm steps 1-2: graph, Laplacian, m smallest eigenvectors."""
    graph = build_knn_affinity(X, cfg, workers=workers)
    L = normalized_laplacian(graph)
    return spectral_basis(L, cfg.m, method=cfg.eig_method)
