"""Rank- and sign-based scatter estimators for elliptical returns.

* marginal Kendall's tau, mapped to correlations by ``sin(pi tau / 2)``
* spatial Kendall's tau (multivariate sign covariance) for eigenvectors
* Huber M-estimates of second moments for the marginal scales
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .factor_model import ReturnsPanel

__all__ = [
    "RobustCovariance",
    "kendall_tau_matrix",
    "kendall_tau_correlation",
    "spatial_kendall_matrix",
    "spatial_kendall_eigvecs",
    "huber_scale",
    "robust_covariance",
]

# pairs of observations processed per block in the O(T^2) loops
_BLOCK = 4096


@dataclass(frozen=True)
class RobustCovariance:
    sigma_el1: np.ndarray
    sigma_el2: np.ndarray
    d_hat: np.ndarray
    lambdas_k: np.ndarray
    gammas_k: np.ndarray
    skipped_pairs: int = 0


def _as_matrix(data) -> np.ndarray:
    if isinstance(data, ReturnsPanel):
        return data.values
    return np.atleast_2d(np.asarray(data, dtype=float))


def _pair_blocks(T: int):
    """Yield ``(s, t)`` index arrays covering all pairs ``s < t`` in blocks."""
    s_buf, t_buf, n = [], [], 0
    for s in range(T - 1):
        t = np.arange(s + 1, T)
        s_buf.append(np.full(t.size, s))
        t_buf.append(t)
        n += t.size
        if n >= _BLOCK:
            yield np.concatenate(s_buf), np.concatenate(t_buf)
            s_buf, t_buf, n = [], [], 0
    if n:
        yield np.concatenate(s_buf), np.concatenate(t_buf)


def kendall_tau_matrix(data) -> np.ndarray:
    """Pairwise Kendall's tau-b between the rows of a ``p x T`` matrix.

    Rows that are constant get tau 0 against everything (with a warning).
    """
    X = _as_matrix(data)
    p, T = X.shape
    if T < 2:
        raise ValueError("need at least two observations")
    C = np.zeros((p, p))
    for s, t in _pair_blocks(T):
        D = np.sign(X[:, t] - X[:, s])
        C += D @ D.T
    n_untied = np.diag(C).copy()
    const = n_untied == 0
    if np.any(const):
        warnings.warn(f"{int(const.sum())} constant series; their Kendall tau set to 0")
    denom = np.sqrt(np.outer(n_untied, n_untied))
    with np.errstate(invalid="ignore", divide="ignore"):
        tau = np.where(denom > 0, C / denom, 0.0)
    np.fill_diagonal(tau, 1.0)
    return tau


def kendall_tau_correlation(data) -> np.ndarray:
    """Correlation matrix ``sin(pi tau / 2)`` with unit diagonal."""
    R = np.sin(np.pi * kendall_tau_matrix(data) / 2.0)
    np.fill_diagonal(R, 1.0)
    return (R + R.T) / 2


def spatial_kendall_matrix(data, return_skipped: bool = False):
    """``mean_{s<t} (y_s - y_t)(y_s - y_t)' / ||y_s - y_t||^2`` over columns of ``data``.

    Duplicate observations (zero difference) are skipped; the mean is taken
    over the remaining pairs.  The result has unit trace.
    """
    Y = _as_matrix(data)
    p, T = Y.shape
    if T < 2:
        raise ValueError("need at least two observations")
    K = np.zeros((p, p))
    used = skipped = 0
    for s, t in _pair_blocks(T):
        D = Y[:, s] - Y[:, t]
        nrm2 = np.einsum("ij,ij->j", D, D)
        ok = nrm2 > 0
        skipped += int((~ok).sum())
        used += int(ok.sum())
        D = D[:, ok] / np.sqrt(nrm2[ok])
        K += D @ D.T
    if skipped:
        warnings.warn(f"spatial Kendall: skipped {skipped} duplicate observation pairs")
    if used == 0:
        raise ValueError("all observations are identical")
    K = K / used
    K = (K + K.T) / 2
    if return_skipped:
        return K, skipped
    return K


def _sign_fix(vecs: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(vecs), axis=0)
    flip = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    flip[flip == 0] = 1.0
    return vecs * flip


def _top_eig(M: np.ndarray, k: int):
    w, V = np.linalg.eigh(M)
    order = np.argsort(-w, kind="stable")[:k]
    return w[order], _sign_fix(V[:, order])


def spatial_kendall_eigvecs(data, k: int, d_hat: np.ndarray | None = None):
    """Top-``k`` eigenvectors of ``D R2 D`` where ``R2`` is the spatial Kendall
    matrix of the standardised observations.

    ``d_hat`` are marginal scales (standard deviations); ``None`` skips the
    standardisation.  The spatial Kendall matrix is rescaled to trace ``p``
    before the scales are applied.
    """
    X = _as_matrix(data)
    p = X.shape[0]
    if not 1 <= k <= p:
        raise ValueError(f"k must be in [1, {p}]")
    if d_hat is None:
        d_hat = np.ones(p)
    d_hat = np.asarray(d_hat, dtype=float)
    Y = (X - np.median(X, axis=1, keepdims=True)) / d_hat[:, None]
    R2 = p * spatial_kendall_matrix(Y)
    sigma_el2 = d_hat[:, None] * R2 * d_hat[None, :]
    _, vecs = _top_eig(sigma_el2, k)
    return vecs


def huber_scale(series, c: float = 2.0, tol: float = 1e-10) -> float:
    """Huber M-estimate of ``E[x^2]``.

    Solves ``sum_t psi_tau(x_t^2 - theta) = 0`` with ``psi`` the Huber score
    clipped at ``tau = c * sigma_mad * sqrt(T / ln T)``, ``sigma_mad`` being the
    normal-consistent MAD of the squared series.
    """
    x = np.asarray(series, dtype=float).ravel()
    T = x.size
    if T < 2:
        raise ValueError("need at least two observations")
    z = x * x
    if np.all(z == z[0]):
        if z[0] == 0.0:
            warnings.warn("zero-spread series; Huber scale is 0")
        return float(z[0])
    spread = 1.4826 * np.median(np.abs(z - np.median(z)))
    if spread == 0.0:
        spread = np.mean(np.abs(z - np.median(z)))
    tau = c * spread * math.sqrt(T / math.log(T)) if T > 2 else c * spread

    def score(theta):
        return float(np.sum(np.clip(z - theta, -tau, tau)))

    lo, hi = float(z.min()), float(z.max())
    if score(lo) <= 0:
        return lo
    if score(hi) >= 0:
        return hi
    return float(brentq(score, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=500))


def robust_covariance(panel: ReturnsPanel, k: int, huber_c: float = 2.0) -> RobustCovariance:
    """Assemble the two elliptical covariance estimates and their top-``k`` spectra."""
    X = panel.values
    p, T = X.shape
    Xc = X - np.median(X, axis=1, keepdims=True)
    d_hat = np.sqrt(np.array([huber_scale(row, c=huber_c) for row in Xc]))
    if np.any(d_hat <= 0):
        raise ValueError("robust scale estimate is zero for some asset")
    R1 = kendall_tau_correlation(X)
    sigma_el1 = d_hat[:, None] * R1 * d_hat[None, :]
    R2, skipped = spatial_kendall_matrix(Xc / d_hat[:, None], return_skipped=True)
    sigma_el2 = d_hat[:, None] * (p * R2) * d_hat[None, :]
    lambdas, _ = _top_eig(sigma_el1, k)
    _, gammas = _top_eig(sigma_el2, k)
    return RobustCovariance(
        sigma_el1=sigma_el1,
        sigma_el2=(sigma_el2 + sigma_el2.T) / 2,
        d_hat=d_hat,
        lambdas_k=lambdas,
        gammas_k=gammas,
        skipped_pairs=skipped,
    )
