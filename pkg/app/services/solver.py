import logging
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np
from scipy.spatial.distance import cdist
from tqdm import tqdm

from app.services.dataio import Dataset
from app.services.l1solve import lasso_cd_batch, soft_threshold
from app.services.matcore import solve_sylvester
from app.services.spectral import SpectralBasis, build_basis
from app.utils.errors import DataError, SolverError
from app.utils.models import SolverParams

logger = logging.getLogger(__name__)

DESCENT_SLACK = 1e-8

# variants whose SAP-I smoothing term is ||B Y~^T||_F^2 instead of the L1 norm
QUADRATIC_SMOOTHING = ("single_l1", "no_l1")
# variants whose every step minimizes the objective exactly
DESCENT_VARIANTS = ("full", "single_l1", "no_l1")


@dataclass
class SolverState:
    Y: np.ndarray  # k x N_s, current Y*
    alpha: np.ndarray  # m x k, Y~* = (V_m alpha)^T
    W: np.ndarray  # k x d
    objective_trace: List[float] = field(default_factory=list)
    step_trace: List[Tuple[int, str, float]] = field(default_factory=list)
    converged: bool = True
    iterations: int = 0
    descent_violations: int = 0


# ---------- objective ----------

def objective(state: SolverState, data: Dataset, basis: SpectralBasis, p: SolverParams) -> float:
    """
    ||Y - Y~||_F^2 + lambda1 sum_ij sqrt(Sigma_ii)|alpha_ij| + lambda2 ||Y - Y_s||_1
    + lambda3 (||W X - Y||_F^2 + ||X - W^T Y||_F^2 + lambda4 ||W||_F^2)

    The lambda1 term uses the orthonormal-basis identity, valid because Y~ lies in span(V_m).
    The `single_l1` and `no_l1` variants square that term (lambda1 sum_ij Sigma_ii alpha_ij^2),
    and `no_l1` drops the lambda2 term.
    """
    X, Y, W = data.X, state.Y, state.W
    Y_tilde = basis.attributes(state.alpha)
    fit = float(np.sum((Y - Y_tilde) ** 2))
    if p.variant in QUADRATIC_SMOOTHING:
        smooth = p.lambda1 * basis.quadratic_penalty(state.alpha)
    else:
        smooth = p.lambda1 * basis.l1_penalty(state.alpha)
    sparse = sparse_weight(p) * float(np.abs(Y - data.Y_init).sum())
    proj = float(np.sum((W @ X - Y) ** 2) + np.sum((X - W.T @ Y) ** 2) + p.lambda4 * np.sum(W**2))
    return fit + smooth + sparse + p.lambda3 * proj


# ---------- block updates ----------

def bpl(Y: np.ndarray, X: np.ndarray, lambda4: float) -> np.ndarray:
    """(Y Y^T + lambda4 I) W + W (X X^T) = 2 Y X^T; lambda3 cancels out of the stationarity condition."""
    if Y.shape[1] != X.shape[1]:
        raise DataError(f"Y has {Y.shape[1]} columns but X has {X.shape[1]}")
    if not lambda4 > 0:
        raise SolverError(f"lambda4={lambda4} leaves the Sylvester operator without a positive shift")
    k = Y.shape[0]
    return solve_sylvester(Y @ Y.T + lambda4 * np.eye(k), X @ X.T, 2.0 * Y @ X.T)


def init_w(X: np.ndarray, Y_init: np.ndarray, lambda4: float) -> np.ndarray:
    return bpl(Y_init, X, lambda4)


def sap_i(Y: np.ndarray, basis: SpectralBasis, lambda1: float) -> np.ndarray:
    """
    Closed form of the SAP-I step. With V_m^T V_m = I,
    ||V_m a - y||^2 = ||a - V_m^T y||^2 + const, so each coefficient is a
    soft-threshold of the projection at lambda1 sqrt(Sigma_ii) / 2.
    """
    if Y.shape[1] != basis.n_samples:
        raise DataError(f"Y has {Y.shape[1]} columns, basis covers {basis.n_samples} images")
    C = basis.eigvecs.T @ Y.T  # m x k
    return soft_threshold(C, lambda1 * basis.penalty_weights[:, None] / 2.0)


def sap_i_ridge(Y: np.ndarray, basis: SpectralBasis, lambda1: float) -> np.ndarray:
    """SAP-I with the squared smoothing term: alpha_ij = c_ij / (1 + lambda1 Sigma_ii), c = V_m^T Y^T."""
    if Y.shape[1] != basis.n_samples:
        raise DataError(f"Y has {Y.shape[1]} columns, basis covers {basis.n_samples} images")
    return (basis.eigvecs.T @ Y.T) / (1.0 + lambda1 * basis.eigvals[:, None])


def sparse_weight(p: SolverParams) -> float:
    return 0.0 if p.variant == "no_l1" else p.lambda2


def sap_ii(
    alpha: np.ndarray,
    basis: SpectralBasis,
    W: np.ndarray,
    data: Dataset,
    lambda2: float,
    lambda3: float,
    tol: float = 1e-8,
    max_sweeps: int = 1000,
    workers: int = 1,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Sparse denoising step over Y_bar = Y - Y_s, column by column:
        H = 2[(1 + lambda3) I + lambda3 W W^T]          (shared)
        g = -2[(Y~ - Y_s) + lambda3 (W x - y_s) + lambda3 W (x - W^T y_s)]
    Returns (Y, per-column converged mask).
    """
    X, Y_s = data.X, data.Y_init
    k = Y_s.shape[0]
    Y_tilde = basis.attributes(alpha)

    H = 2.0 * ((1.0 + lambda3) * np.eye(k) + lambda3 * (W @ W.T))
    G = -2.0 * ((Y_tilde - Y_s) + lambda3 * (W @ X - Y_s) + lambda3 * (W @ (X - W.T @ Y_s)))
    sol = lasso_cd_batch(H, G, np.full(k, lambda2), tol=tol, max_sweeps=max_sweeps, workers=workers)
    return sol.X + Y_s, sol.converged


def nn_propagate(data: Dataset) -> np.ndarray:
    """Give every unannotated image the attributes of its nearest annotated image (ties: lower index)."""
    ann = np.flatnonzero(data.annotated)
    if ann.size == 0:
        raise DataError("empty annotation set: nothing to propagate")
    Y = data.Y_init.copy()
    rest = np.flatnonzero(~data.annotated)
    if rest.size:
        nearest = np.argmin(cdist(data.X[:, rest].T, data.X[:, ann].T, "sqeuclidean"), axis=1)
        Y[:, rest] = data.Y_init[:, ann[nearest]]
    return Y


# ---------- Algorithm ----------

class SapBplSolver:
    """
    Workflow:

    1) Build the k_g-NN affinity graph over X
    2) Keep the m smallest eigenvectors of its normalized Laplacian
    3) Initialize W by BPL with Y* = Y_s
    repeat until the relative objective decrease < rel_tol or max_iters:
        4) SAP-I: alpha* by soft-thresholding, Y~* = (V_m alpha*)^T
        5) SAP-II: Y* = Y_bar* + Y_s by weighted-L1 coordinate descent
        6) BPL: W* from the Sylvester equation

    Variants: `sap_i_bpl` skips step 5 (Y* = Y~*), `bpl` fits W on the annotated
    images only, `nn_bpl` copies nearest annotated attributes before a single BPL.
    `single_l1` squares the graph smoothing term, so step 4 becomes a ridge
    shrinkage; `no_l1` additionally drops the sparse noise term from step 5.
    """

    def __init__(self, params: SolverParams | None = None):
        self.params = params or SolverParams()
        self.basis: SpectralBasis | None = None

    # ---------- helpers ----------

    def _check(self, data: Dataset) -> None:
        if data.r == 0:
            raise DataError("empty annotation set: at least one annotated image is required")
        if not data.is_normalized():
            logger.warning("training data is not normalized (unit L2 features, unit L1 attributes)")

    def _record(self, state: SolverState, data: Dataset, iteration: int, step: str) -> float:
        value = objective(state, data, self.basis, self.params)
        if state.step_trace and self.params.variant in DESCENT_VARIANTS:
            prev = state.step_trace[-1][2]
            if value > prev + DESCENT_SLACK * max(1.0, abs(prev)):
                state.descent_violations += 1
                logger.warning("objective rose at iteration %d step %s: %.12g -> %.12g", iteration, step, prev, value)
        state.step_trace.append((iteration, step, value))
        return value

    def _iterate(self, state: SolverState, data: Dataset, it: int) -> float:
        """One SAP-I / SAP-II / BPL round; returns the objective after BPL."""
        p = self.params
        if p.variant in QUADRATIC_SMOOTHING:
            state.alpha = sap_i_ridge(state.Y, self.basis, p.lambda1)
        else:
            state.alpha = sap_i(state.Y, self.basis, p.lambda1)
        self._record(state, data, it, "sap_i")

        if p.variant == "sap_i_bpl":
            state.Y = self.basis.attributes(state.alpha)
        else:
            state.Y, col_ok = sap_ii(
                state.alpha, self.basis, state.W, data, sparse_weight(p), p.lambda3,
                tol=p.lasso_tol, max_sweeps=p.lasso_max_sweeps, workers=p.workers,
            )
            state.converged = state.converged and bool(col_ok.all())
        self._record(state, data, it, "sap_ii")

        state.W = bpl(state.Y, data.X, p.lambda4)
        return self._record(state, data, it, "bpl")

    # ---------- main ----------

    def fit(self, data: Dataset) -> SolverState:
        self._check(data)
        p = self.params

        if p.variant == "bpl":
            sub = data.subset(np.flatnonzero(data.annotated))
            W = init_w(sub.X, sub.Y_init, p.lambda4)
            return SolverState(Y=data.Y_init.copy(), alpha=np.zeros((0, data.k)), W=W, iterations=1)
        if p.variant == "nn_bpl":
            Y = nn_propagate(data)
            return SolverState(Y=Y, alpha=np.zeros((0, data.k)), W=bpl(Y, data.X, p.lambda4), iterations=1)

        graph = p.graph.fitted_to(data.n_samples)
        if graph != p.graph:
            logger.warning(
                "graph settings clamped to N_s=%d: k_g %d -> %d, m %d -> %d",
                data.n_samples, p.graph.k_g, graph.k_g, p.graph.m, graph.m,
            )
        self.basis = build_basis(data.X, graph, workers=p.workers)

        state = SolverState(
            Y=data.Y_init.copy(),
            alpha=np.zeros((graph.m, data.k)),
            W=init_w(data.X, data.Y_init, p.lambda4),
        )
        state.objective_trace.append(self._record(state, data, 0, "init"))

        with tqdm(total=p.max_iters, desc=f"SAP+BPL ({p.variant})", disable=not p.verbose) as progress:
            for it in range(1, p.max_iters + 1):
                value = self._iterate(state, data, it)

                prev = state.objective_trace[-1]
                state.objective_trace.append(value)
                state.iterations = it
                rel = (prev - value) / max(abs(prev), np.finfo(float).tiny)
                logger.info("iteration %d: objective %.10g (relative decrease %.3e)", it, value, rel)
                progress.update(1)
                progress.set_postfix(objective=f"{value:.6g}")
                if rel < p.rel_tol:
                    break

        return state


def train(data: Dataset, p: SolverParams | None = None) -> Tuple[np.ndarray, SolverState]:
    state = SapBplSolver(p).fit(data)
    return state.W, state


def refine_tags(data: Dataset, p: SolverParams | None = None) -> np.ndarray:
    """Run the solver with noisy tags as Y_s and return the refined tags Y*."""
    _, state = train(data, p)
    return state.Y
