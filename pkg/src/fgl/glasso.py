"""Graphical lasso for sparse precision matrices, with BIC tuning.

The solver is the block-coordinate scheme of Friedman, Hastie and
Tibshirani: start from ``W = S + lambda I`` (diagonal held fixed), update one
column at a time by solving a lasso problem with cyclical coordinate
descent, and read the precision matrix off the final coefficients via the
partitioned-inverse formulas.  Because ``W_ii = S_ii + lambda`` the diagonal
of ``Theta`` is effectively penalised too; the KKT checker below certifies
exactly that problem.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from . import _cd
from .errors import (
    ConvergenceError,
    DegenerateGridError,
    NotPositiveDefiniteError,
)

__all__ = [
    "GlassoConfig",
    "PrecisionEstimate",
    "GraphStats",
    "lambda_grid",
    "lasso_cd",
    "glasso_fit",
    "bic_score",
    "select_lambda",
    "graph_stats",
    "kkt_residual",
    "penalty_matrix",
    "dual_objective",
    "omega_3t",
]

ZERO_TOL = 1e-10
_MAX_CD_ITER = 10_000


@dataclass(frozen=True)
class GlassoConfig:
    grid_size: int = 10
    grid_floor_ratio: float = 0.1
    max_sweeps: int = 200
    convergence_tol: float = 1e-6
    cd_tol: float = 1e-12  # tight enough that sweeps do not raise -logdet W
    penalty_weighting: Literal["uniform", "diagonal_weighted"] = "uniform"

    def __post_init__(self):
        if int(self.grid_size) != self.grid_size or self.grid_size < 2:
            raise ValueError("grid_size must be an integer >= 2")
        if not 0.0 < self.grid_floor_ratio < 1.0:
            raise ValueError("grid_floor_ratio must lie in (0, 1)")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be positive")
        if self.convergence_tol <= 0 or self.cd_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.penalty_weighting not in ("uniform", "diagonal_weighted"):
            raise ValueError(f"unknown penalty_weighting {self.penalty_weighting!r}")


@dataclass(frozen=True)
class PrecisionEstimate:
    theta: np.ndarray
    lam: float
    bic: float
    sweeps_used: int
    method: str = "glasso"
    path: tuple = ()
    working_cov: np.ndarray | None = field(default=None, repr=False, compare=False)
    coef: np.ndarray | None = field(default=None, repr=False, compare=False)
    objective_trace: tuple = field(default=(), repr=False, compare=False)
    theta_eps: np.ndarray | None = field(default=None, repr=False, compare=False)  # FGL residual block


@dataclass(frozen=True)
class GraphStats:
    degrees: np.ndarray
    max_degree: int
    edge_count: int
    support: frozenset


def omega_3t(K: int, p: int, T: int) -> float:
    """Rate ``K^2 sqrt(log p / T) + K^3 / sqrt(p)``."""
    return K**2 * math.sqrt(math.log(p) / T) + K**3 / math.sqrt(p)


def _check_square_symmetric(sigma: np.ndarray, name="sigma") -> np.ndarray:
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise ValueError(f"{name} must be a square matrix")
    if not np.allclose(sigma, sigma.T, rtol=1e-10, atol=1e-12 * max(1.0, np.abs(sigma).max())):
        raise ValueError(f"{name} must be symmetric")
    return (sigma + sigma.T) / 2


def lambda_grid(sigma: np.ndarray, cfg: GlassoConfig = GlassoConfig()) -> np.ndarray:
    """Log-equispaced penalties from ``floor_ratio * lam_max`` up to ``lam_max``.

    ``lam_max`` is the largest off-diagonal magnitude of ``sigma``, the
    smallest penalty at which every off-diagonal of the solution is zero.
    """
    sigma = _check_square_symmetric(sigma)
    off = np.abs(sigma - np.diag(np.diag(sigma)))
    lam_max = off.max() if sigma.shape[0] > 1 else 0.0
    if lam_max <= 0.0:
        raise DegenerateGridError("degenerate grid: all off-diagonal entries are zero")
    lam_min = cfg.grid_floor_ratio * lam_max
    m = cfg.grid_size
    i = np.arange(m)
    grid = np.exp(np.log(lam_min) + i / (m - 1) * np.log(lam_max / lam_min))
    grid[0], grid[-1] = lam_min, lam_max
    return grid


def penalty_matrix(sigma: np.ndarray, lam: float, weighting: str = "uniform") -> np.ndarray:
    """Per-entry penalties.  Diagonal entries carry ``lam`` in both modes."""
    p = sigma.shape[0]
    if weighting == "uniform":
        return np.full((p, p), float(lam))
    d = np.sqrt(np.diag(sigma) + lam)
    P = lam * np.outer(d, d)
    np.fill_diagonal(P, lam)
    return P


def lasso_cd(
    W11: np.ndarray,
    s12: np.ndarray,
    lam,
    beta0: np.ndarray | None = None,
    cd_tol: float = 1e-8,
    max_iter: int = _MAX_CD_ITER,
) -> np.ndarray:
    """Solve ``W11 beta - s12 + lam * sign(beta) = 0`` by coordinate descent.

    ``lam`` may be a scalar or one penalty per coordinate.
    """
    W11 = np.asarray(W11, dtype=float)
    s12 = np.asarray(s12, dtype=float)
    n = s12.shape[0]
    if W11.shape != (n, n):
        raise ValueError("W11 and s12 dimensions disagree")
    pen = np.broadcast_to(np.asarray(lam, dtype=float), (n,))
    beta = np.zeros(n) if beta0 is None else np.array(beta0, dtype=float)
    if beta.shape != (n,):
        raise ValueError("beta0 has the wrong length")
    # embed as column n of an (n+1) x (n+1) matrix so the glasso kernel can be reused
    W = np.zeros((n + 1, n + 1))
    W[:n, :n] = W11
    W[n, n] = 1.0
    s = np.append(s12, 0.0)
    pen_full = np.append(pen, 0.0)
    b = np.append(beta, 0.0)
    wb = W[:, :n] @ beta
    _cd.column_lasso(W, s, pen_full, b, wb, n, cd_tol, max_iter)
    return b[:n]


def dual_objective(W: np.ndarray) -> float:
    """``-log det W``; block updates never increase it."""
    sign, logdet = np.linalg.slogdet(W)
    return -logdet if sign > 0 else np.inf


def _logdet_pd(theta: np.ndarray) -> float:
    try:
        L = np.linalg.cholesky(theta)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("theta is not positive definite") from exc
    return 2.0 * float(np.sum(np.log(np.diag(L))))


def bic_score(theta: np.ndarray, sigma: np.ndarray, T: int) -> float:
    """``T [tr(theta sigma) - log det theta] + ln T * #{i <= j : theta_ij != 0}``."""
    theta = np.asarray(theta, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if theta.shape != sigma.shape:
        raise ValueError("theta and sigma must have the same shape")
    fit = float(np.sum(theta * sigma.T)) - _logdet_pd(theta)
    nnz = int(np.count_nonzero(np.abs(np.triu(theta)) > ZERO_TOL))
    return T * fit + math.log(T) * nnz


def kkt_residual(theta: np.ndarray, sigma: np.ndarray, P: np.ndarray, zero_tol: float = ZERO_TOL) -> float:
    """Max violation of the first-order conditions of the penalised log-det problem.

    With ``G = inv(theta) - sigma`` the conditions are ``G_ij = P_ij sign(theta_ij)``
    where ``theta_ij != 0`` and ``|G_ij| <= P_ij`` elsewhere.
    """
    G = np.linalg.inv(theta) - sigma
    nz = np.abs(theta) > zero_tol
    active = np.abs(G - P * np.sign(theta))
    inactive = np.clip(np.abs(G) - P, 0.0, None)
    return float(np.max(np.where(nz, active, inactive)))


def glasso_fit(
    sigma: np.ndarray,
    lam: float,
    cfg: GlassoConfig = GlassoConfig(),
    T: int | None = None,
    warm_start: PrecisionEstimate | None = None,
    record_objective: bool = False,
) -> PrecisionEstimate:
    """Graphical lasso at a single penalty.

    ``T`` is only used to populate the BIC.  ``warm_start`` reuses the working
    covariance and column coefficients of an earlier fit (typically at a
    larger penalty); a warm covariance that is not positive definite after
    resetting its diagonal is discarded.
    """
    S = _check_square_symmetric(sigma)
    p = S.shape[0]
    lam = float(lam)
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    if np.any(np.diag(S) <= 0):
        raise ValueError("sigma must have a strictly positive diagonal")
    if lam == 0.0:
        try:
            np.linalg.cholesky(S)
        except np.linalg.LinAlgError as exc:
            raise ValueError("lambda = 0 requires a positive definite sigma") from exc

    P = penalty_matrix(S, lam, cfg.penalty_weighting)
    scale = float(np.mean(np.abs(np.diag(S))))
    cd_tol = cfg.cd_tol * scale

    W = S + lam * np.eye(p)
    Beta = np.zeros((p, p))
    if warm_start is not None and warm_start.working_cov is not None:
        Wn = warm_start.working_cov.copy()
        np.fill_diagonal(Wn, np.diag(S) + lam)
        try:
            np.linalg.cholesky(Wn)
            W = Wn
        except np.linalg.LinAlgError:
            pass
        Beta = warm_start.coef.copy()
    W = np.ascontiguousarray(W)
    Pf = np.ascontiguousarray(P)
    try:
        np.linalg.cholesky(W)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(
            f"sigma + lambda I is not positive definite at lambda={lam:.3g}; the block updates need a PD start"
        ) from exc

    trace = [dual_objective(W)] if record_objective else []
    delta = np.inf
    sweeps = 0
    for sweeps in range(1, cfg.max_sweeps + 1):
        W_old = W.copy()
        _cd.glasso_sweep(W, S, Pf, Beta, cd_tol, _MAX_CD_ITER)
        if record_objective:
            trace.append(dual_objective(W))
        delta = float(np.max(np.abs(W - W_old))) / scale
        if not math.isfinite(delta):
            raise ConvergenceError("solver diverged (non-finite working covariance)", last_W=W, last_beta=Beta, residual=delta)
        if delta <= cfg.convergence_tol:
            break
    else:
        raise ConvergenceError(
            f"solver did not converge in {cfg.max_sweeps} sweeps (residual {delta:.3g})",
            last_W=W,
            last_beta=Beta,
            residual=delta,
        )

    theta = _cd.recover_precision(W, Beta)
    theta = (theta + theta.T) / 2
    try:
        np.linalg.cholesky(theta)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - bug signal
        raise NotPositiveDefiniteError(
            "internal error: recovered precision matrix is not positive definite"
        ) from exc
    bic = bic_score(theta, S, T) if T is not None else float("nan")
    return PrecisionEstimate(
        theta=theta,
        lam=lam,
        bic=bic,
        sweeps_used=sweeps,
        method="glasso",
        working_cov=W,
        coef=Beta,
        objective_trace=tuple(trace),
    )


def select_lambda(sigma: np.ndarray, T: int, cfg: GlassoConfig = GlassoConfig()) -> PrecisionEstimate:
    """Fit the whole grid from the largest penalty down and keep the BIC minimiser.

    Ties are resolved toward the larger penalty.
    """
    grid = lambda_grid(sigma, cfg)
    fits = []
    prev = None
    for lam in grid[::-1]:
        prev = glasso_fit(sigma, lam, cfg, T=T, warm_start=prev)
        fits.append(prev)
    # fits run from largest to smallest lambda; argmin keeps the first (largest) on ties
    bics = np.array([f.bic for f in fits])
    best = fits[int(np.argmin(bics))]
    path = tuple((f.lam, f.bic) for f in reversed(fits))
    return PrecisionEstimate(
        theta=best.theta,
        lam=best.lam,
        bic=best.bic,
        sweeps_used=best.sweeps_used,
        method=best.method,
        path=path,
        working_cov=best.working_cov,
        coef=best.coef,
    )


def graph_stats(theta: np.ndarray, zero_tol: float = ZERO_TOL) -> GraphStats:
    """Vertex degrees, max degree, incidence count and support of ``theta``'s graph."""
    theta = np.asarray(theta)
    A = np.abs(theta) > zero_tol
    np.fill_diagonal(A, False)
    degrees = A.sum(axis=0).astype(int)
    rows, cols = np.nonzero(A)
    return GraphStats(
        degrees=degrees,
        max_degree=int(degrees.max()) if degrees.size else 0,
        edge_count=int(degrees.sum()),
        support=frozenset(zip(rows.tolist(), cols.tolist())),
    )
