"""Approximate factor model estimation by principal components.

Returns are held as a ``p x T`` matrix (assets in rows, periods in
columns).  Everything here operates on the column-wise de-meaned panel
``R`` so that PCA targets the covariance rather than raw second moments.

Identification follows the usual PCA normalisation::

    (1/T) F F' = I_K,    B'B diagonal

with ``F = sqrt(T) * (top-K eigenvectors of R'R)'`` and ``B = R F' / T``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import CollinearFactorsError, InsufficientRankError

__all__ = [
    "ReturnsPanel",
    "FactorModelFit",
    "estimate_pca",
    "select_num_factors",
    "fit_observed_factors",
    "ic_penalty",
    "default_k_max",
    "factor_objective",
]

# eigenvalues below this fraction of the largest are treated as zero
_RANK_TOL = 1e-12


@dataclass(frozen=True)
class ReturnsPanel:
    """Excess returns, one row per asset and one column per period."""

    values: np.ndarray
    period_labels: tuple = ()
    asset_labels: tuple = ()

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            raise ValueError("returns must be a 2-d (assets x periods) matrix")
        p, T = values.shape
        if p < 2 or T < 2:
            raise ValueError(f"need at least 2 assets and 2 periods, got p={p}, T={T}")
        if not np.all(np.isfinite(values)):
            raise ValueError("returns contain non-finite entries")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        periods = tuple(self.period_labels) or tuple(range(T))
        assets = tuple(self.asset_labels) or tuple(f"a{i}" for i in range(p))
        if len(periods) != T:
            raise ValueError("period_labels length does not match T")
        if len(assets) != p:
            raise ValueError("asset_labels length does not match p")
        object.__setattr__(self, "period_labels", periods)
        object.__setattr__(self, "asset_labels", assets)

    @property
    def p(self) -> int:
        return self.values.shape[0]

    @property
    def T(self) -> int:
        return self.values.shape[1]

    @property
    def mean(self) -> np.ndarray:
        """Per-asset sample mean over time."""
        return self.values.mean(axis=1)

    def centered(self) -> np.ndarray:
        return self.values - self.mean[:, None]

    def sample_covariance(self) -> np.ndarray:
        R = self.centered()
        return R @ R.T / self.T

    def window(self, start: int, stop: int, assets: Sequence[int] | None = None) -> "ReturnsPanel":
        """Sub-panel of periods ``start:stop`` and optionally a subset of assets."""
        idx = np.arange(self.p) if assets is None else np.asarray(assets)
        return ReturnsPanel(
            self.values[np.ix_(idx, np.arange(start, stop))],
            self.period_labels[start:stop],
            tuple(self.asset_labels[i] for i in idx),
        )


@dataclass(frozen=True)
class FactorModelFit:
    k_hat: int
    factors: np.ndarray
    loadings: np.ndarray
    residuals: np.ndarray
    sigma_eps: np.ndarray
    sigma_f: np.ndarray
    theta_f: np.ndarray
    mean: np.ndarray = field(default=None)
    method: str = "pca"

    @property
    def common(self) -> np.ndarray:
        return self.loadings @ self.factors


def _top_eigvecs_of_gram(R: np.ndarray, k: int):
    """Top-k unit eigenvectors of R'R (T x k) and their eigenvalues.

    Works on whichever Gram matrix is smaller and converts between the two
    factorisations through R.
    """
    p, T = R.shape
    if T <= p:
        evals, evecs = np.linalg.eigh(R.T @ R)
        order = np.argsort(-evals, kind="stable")
        evals, V = evals[order], evecs[:, order]
    else:
        evals, evecs = np.linalg.eigh(R @ R.T)
        order = np.argsort(-evals, kind="stable")
        evals, U = evals[order], evecs[:, order]
        V = np.zeros((T, min(k, p)))
        top = evals[: V.shape[1]]
        good = top > _RANK_TOL * max(evals[0], np.finfo(float).tiny)
        V[:, good] = (R.T @ U[:, : V.shape[1]][:, good]) / np.sqrt(top[good])
    return evals, V


def estimate_pca(panel: ReturnsPanel, k: int) -> FactorModelFit:
    """Principal-components factor fit with ``k`` factors.

    Factors are ordered by descending eigenvalue; each factor's sign is fixed
    so that its largest-magnitude loading is positive.
    """
    p, T = panel.p, panel.T
    if not (1 <= int(k) <= min(p, T)) or int(k) != k:
        raise ValueError(f"k must be an integer in [1, {min(p, T)}], got {k}")
    k = int(k)
    R = panel.centered()
    evals, V = _top_eigvecs_of_gram(R, k)
    if evals[0] <= 0 or evals[k - 1] <= _RANK_TOL * evals[0]:
        raise InsufficientRankError(
            f"insufficient rank: eigenvalue {k} of R'R is numerically zero"
        )
    V = V[:, :k]
    F = np.sqrt(T) * V.T
    B = R @ F.T / T
    # deterministic sign: largest |loading| positive
    flip = np.sign(B[np.argmax(np.abs(B), axis=0), np.arange(k)])
    flip[flip == 0] = 1.0
    F = F * flip[:, None]
    B = B * flip[None, :]
    E = R - B @ F
    sigma_f = F @ F.T / T
    sigma_f = (sigma_f + sigma_f.T) / 2
    return FactorModelFit(
        k_hat=k,
        factors=F,
        loadings=B,
        residuals=E,
        sigma_eps=E @ E.T / T,
        sigma_f=sigma_f,
        theta_f=np.linalg.inv(sigma_f),
        mean=panel.mean,
        method="pca",
    )


def ic_penalty(p: int, T: int) -> float:
    """Default information-criterion penalty ``((p+T)/(pT)) ln(pT/(p+T))``."""
    return (p + T) / (p * T) * np.log(p * T / (p + T))


def default_k_max(p: int, T: int) -> int:
    """``floor(min(p^(1/3), T) - 1)`` capped at 15, and at least 1."""
    k = int(np.floor(min(p ** (1.0 / 3.0), T) - 1))
    return int(max(1, min(k, 15, p, T)))


def factor_objective(R: np.ndarray, K: int, U: np.ndarray | None = None) -> float:
    """Least-squares objective ``V(K)`` under the ``B'B/p = I`` normalisation.

    ``R`` must already be centred.  The loadings are ``sqrt(p)`` times the top
    eigenvectors of ``RR'``, the preliminary factors are
    ``Fbar' = sqrt(K) R'B/p`` and these are rescaled by
    ``(Fbar Fbar'/T)^(1/2)`` before the fit term is evaluated.  ``U`` may carry
    precomputed left singular vectors of ``R``.
    """
    p, T = R.shape
    if U is None:
        U = np.linalg.svd(R, full_matrices=False)[0]
    BK = np.sqrt(p) * U[:, :K]
    Fbar_t = np.sqrt(K) * R.T @ BK / p  # T x K
    G = Fbar_t.T @ Fbar_t / T
    w, Q = np.linalg.eigh((G + G.T) / 2)
    root = (Q * np.sqrt(np.clip(w, 0.0, None))) @ Q.T
    Fhat_t = Fbar_t @ root
    # min over loadings of the scaled fit term is a projection onto span(Fhat)
    coef, *_ = np.linalg.lstsq(Fhat_t, R.T, rcond=None)
    resid = R.T - Fhat_t @ coef
    return float(np.sum(resid**2) / (p * T))


def select_num_factors(
    panel: ReturnsPanel,
    k_max: int | None = None,
    penalty: Callable[[int, int], float] = ic_penalty,
    return_criterion: bool = False,
):
    """Choose the number of factors by ``argmin ln V(K) + K g(p, T)``.

    Ties go to the smaller ``K``.  With ``return_criterion=True`` the
    criterion values for ``K = 1..k_max`` are returned as well.
    """
    p, T = panel.p, panel.T
    if k_max is None:
        k_max = default_k_max(p, T)
    if int(k_max) != k_max or k_max < 1:
        raise ValueError(f"k_max must be a positive integer, got {k_max}")
    if k_max > min(p, T):
        raise ValueError(f"k_max={k_max} exceeds min(p, T)={min(p, T)}")
    R = panel.centered()
    U = np.linalg.svd(R, full_matrices=False)[0]
    g = penalty(p, T)
    crit = np.empty(k_max)
    with np.errstate(divide="ignore"):
        for K in range(1, k_max + 1):
            crit[K - 1] = np.log(factor_objective(R, K, U)) + K * g
    k_hat = int(np.argmin(crit)) + 1  # first minimum -> smallest K
    if return_criterion:
        return k_hat, crit
    return k_hat


def fit_observed_factors(
    panel: ReturnsPanel, observed: np.ndarray, demean_factors: bool = True
) -> FactorModelFit:
    """Loadings by least squares of each asset's returns on given factors."""
    F = np.atleast_2d(np.asarray(observed, dtype=float))
    if F.shape[1] != panel.T:
        raise ValueError(f"observed factors have {F.shape[1]} periods, panel has {panel.T}")
    if not np.all(np.isfinite(F)):
        raise ValueError("observed factors contain non-finite entries")
    T = panel.T
    if demean_factors:
        F = F - F.mean(axis=1, keepdims=True)
    R = panel.centered()
    FFt = F @ F.T
    s = np.linalg.svd(FFt, compute_uv=False)
    if s[-1] <= 1e-12 * max(s[0], np.finfo(float).tiny):
        raise CollinearFactorsError("collinear factors: F F' is singular")
    B = np.linalg.solve(FFt, F @ R.T).T
    E = R - B @ F
    sigma_f = FFt / T
    return FactorModelFit(
        k_hat=F.shape[0],
        factors=F,
        loadings=B,
        residuals=E,
        sigma_eps=E @ E.T / T,
        sigma_f=sigma_f,
        theta_f=np.linalg.inv(sigma_f),
        mean=panel.mean,
        method="observed",
    )
