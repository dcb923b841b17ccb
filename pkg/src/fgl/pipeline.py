"""Factor Graphical Lasso: factor fit, sparse residual precision, SMW assembly."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .errors import DegenerateFactorBlockError, RobustSpectrumError
from .factor_model import (
    FactorModelFit,
    ReturnsPanel,
    estimate_pca,
    fit_observed_factors,
    select_num_factors,
)
from .glasso import GlassoConfig, PrecisionEstimate, select_lambda
from .robust import RobustCovariance, robust_covariance

__all__ = [
    "FglOptions",
    "fgl_combine",
    "fgl_estimate",
    "robust_fgl_estimate",
    "glasso_estimate",
    "sample_inverse_estimate",
]


@dataclass(frozen=True)
class FglOptions:
    """How to run the pipeline.

    ``factor_mode`` is ``"auto"`` (information criterion, up to ``k_max``),
    ``"fixed"`` (use ``k``) or ``"observed"`` (regress on ``observed``, a
    ``K x T`` array).
    """

    factor_mode: Literal["auto", "fixed", "observed"] = "auto"
    k: int | None = None
    k_max: int | None = None
    observed: np.ndarray | None = field(default=None, repr=False)
    glasso: GlassoConfig = GlassoConfig()
    robust: Literal["none", "elliptical"] = "none"
    huber_c: float = 2.0

    def __post_init__(self):
        if self.factor_mode not in ("auto", "fixed", "observed"):
            raise ValueError(f"unknown factor_mode {self.factor_mode!r}")
        if self.factor_mode == "fixed" and (self.k is None or self.k < 1):
            raise ValueError("fixed factor mode needs k >= 1")
        if self.factor_mode == "observed" and self.observed is None:
            raise ValueError("observed factor mode needs the factor series")
        if self.robust not in ("none", "elliptical"):
            raise ValueError(f"unknown robust option {self.robust!r}")
        if self.robust == "elliptical" and self.factor_mode == "observed":
            raise ValueError("the robust estimator is not defined for observed factors")


def fgl_combine(theta_eps: np.ndarray, theta_f: np.ndarray, B: np.ndarray) -> np.ndarray:
    """``Theta_e - Theta_e B [Theta_f + B' Theta_e B]^{-1} B' Theta_e``, symmetrised."""
    theta_eps = np.asarray(theta_eps, dtype=float)
    theta_f = np.atleast_2d(np.asarray(theta_f, dtype=float))
    B = np.asarray(B, dtype=float).reshape(theta_eps.shape[0], -1)
    if theta_f.shape != (B.shape[1], B.shape[1]):
        raise ValueError("theta_f and B dimensions disagree")
    TB = theta_eps @ B
    inner = theta_f + B.T @ TB
    inner = (inner + inner.T) / 2
    try:
        L = np.linalg.cholesky(inner)
    except np.linalg.LinAlgError as exc:
        raise DegenerateFactorBlockError("degenerate factor block: inner K x K system is singular") from exc
    Z = np.linalg.solve(L, TB.T)  # L^{-1} B' Theta_e
    theta = theta_eps - Z.T @ Z
    return (theta + theta.T) / 2


def _factor_step(panel: ReturnsPanel, opts: FglOptions) -> FactorModelFit:
    if opts.factor_mode == "observed":
        return fit_observed_factors(panel, opts.observed)
    k = opts.k if opts.factor_mode == "fixed" else select_num_factors(panel, opts.k_max)
    return estimate_pca(panel, k)


def fgl_estimate(panel: ReturnsPanel, opts: FglOptions = FglOptions()):
    """Run factor fit, BIC-tuned graphical lasso on the residual covariance, and
    Sherman-Morrison-Woodbury assembly.  Returns ``(PrecisionEstimate, FactorModelFit)``.
    """
    if opts.robust == "elliptical":
        return robust_fgl_estimate(panel, opts)
    fit = _factor_step(panel, opts)
    if panel.T <= fit.k_hat:
        warnings.warn(f"T={panel.T} does not exceed the number of factors {fit.k_hat}")
    eps = select_lambda(fit.sigma_eps, panel.T, opts.glasso)
    theta = fgl_combine(eps.theta, fit.theta_f, fit.loadings)
    est = PrecisionEstimate(
        theta=theta,
        lam=eps.lam,
        bic=eps.bic,
        sweeps_used=eps.sweeps_used,
        method="fgl",
        path=eps.path,
        theta_eps=eps.theta,
    )
    return est, fit


def _clean_residual_cov(S: np.ndarray) -> np.ndarray:
    """Symmetrise, floor the diagonal at ``1e-8 max(diag)`` and, only if the
    result is not positive definite, clip its eigenvalues at the same floor.

    The robust residual covariance mixes eigenvalues of one estimator with
    eigenvectors of another, so it is typically indefinite by more than any
    grid penalty; without the clip ``S + lambda I`` is not a valid glasso start.
    """
    S = (S + S.T) / 2
    d = np.diag(S).copy()
    floor = 1e-8 * max(d.max(), np.finfo(float).tiny)
    np.fill_diagonal(S, np.maximum(d, floor))
    w, V = np.linalg.eigh(S)
    if w[0] >= floor:
        return S
    S = (V * np.maximum(w, floor)) @ V.T
    return (S + S.T) / 2


def robust_fgl_estimate(panel: ReturnsPanel, opts: FglOptions = FglOptions(robust="elliptical")):
    """Robust FGL: eigenvalues from the Kendall/Huber covariance, eigenvectors
    from the spatial Kendall covariance, then the usual glasso and SMW steps.
    """
    if opts.factor_mode == "observed":
        raise ValueError("the robust estimator is not defined for observed factors")
    k = opts.k if opts.factor_mode == "fixed" else select_num_factors(panel, opts.k_max)
    rc: RobustCovariance = robust_covariance(panel, k, huber_c=opts.huber_c)
    if np.any(rc.lambdas_k <= 0):
        raise RobustSpectrumError("robust spectrum degenerate: non-positive leading eigenvalue")
    B = rc.gammas_k * np.sqrt(rc.lambdas_k)[None, :]
    sigma_eps = _clean_residual_cov(rc.sigma_el1 - B @ B.T)
    eps = select_lambda(sigma_eps, panel.T, opts.glasso)
    theta_f = np.eye(k)
    theta = fgl_combine(eps.theta, theta_f, B)
    # factor scores by least squares on the robust loadings
    R = panel.centered()
    F = (rc.gammas_k.T @ R) / np.sqrt(rc.lambdas_k)[:, None]
    fit = FactorModelFit(
        k_hat=k,
        factors=F,
        loadings=B,
        residuals=R - B @ F,
        sigma_eps=sigma_eps,
        sigma_f=np.eye(k),
        theta_f=theta_f,
        mean=panel.mean,
        method="robust",
    )
    est = PrecisionEstimate(
        theta=theta,
        lam=eps.lam,
        bic=eps.bic,
        sweeps_used=eps.sweeps_used,
        method="robust_fgl",
        path=eps.path,
        theta_eps=eps.theta,
    )
    return est, fit


def glasso_estimate(panel: ReturnsPanel, cfg: GlassoConfig = GlassoConfig()) -> PrecisionEstimate:
    """Graphical lasso on the raw sample covariance (no factor adjustment)."""
    eps = select_lambda(panel.sample_covariance(), panel.T, cfg)
    return PrecisionEstimate(eps.theta, eps.lam, eps.bic, eps.sweeps_used, "glasso", eps.path)


def sample_inverse_estimate(panel: ReturnsPanel) -> PrecisionEstimate:
    """Inverse of the sample covariance; fails when it is singular."""
    S = panel.sample_covariance()
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("sample covariance is singular") from exc
    # pivots are on the square-root scale: 1e-6 here is a 1e-12 variance ratio
    if np.diag(L).min() <= 1e-6 * np.diag(L).max():
        raise np.linalg.LinAlgError("sample covariance is numerically singular")
    Linv = np.linalg.inv(L)
    theta = Linv.T @ Linv
    return PrecisionEstimate((theta + theta.T) / 2, 0.0, float("nan"), 0, "sample_inverse")
