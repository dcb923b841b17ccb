"""Synthetic data-generating processes with planted precision matrices.

Three designs:

* ``random_graph_factor``: AR(1) factors, Toeplitz-Cholesky loadings and
  Gaussian idiosyncratic errors whose precision is a shifted random graph.
* ``elliptical_t``: factors and errors jointly multivariate t, Gaussian
  loadings, Toeplitz idiosyncratic covariance.
* ``pervasiveness``: as the first, but Toeplitz(rho) idiosyncratic covariance
  and three factors, for studying a shrinking eigenvalue gap.

Every draw also carries a planted mean vector (see :class:`DgpSpec`) so that
return-targeting portfolios have well-defined population weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Literal

import numpy as np
from scipy.linalg import cholesky, solve_triangular, toeplitz

from .factor_model import ReturnsPanel
from .glasso import GlassoConfig, graph_stats
from .portfolio import MomentInputs, risk_exposure, weights

__all__ = [
    "DgpSpec",
    "GroundTruth",
    "case_p",
    "case_k",
    "default_q",
    "random_graph_precision",
    "toeplitz_loadings",
    "toeplitz_cov",
    "simulate_factor_dgp",
    "simulate_elliptical_dgp",
    "simulate_pervasiveness_dgp",
    "simulate",
    "make_truth",
    "eigen_gap",
]

FORMULATIONS = ("GMV", "MWC", "MRC")


def case_p(T: int, case: int = 1) -> int:
    """``floor(T^0.85)`` for case 1, ``floor(3 T^0.85)`` for case 2."""
    return int(math.floor((3.0 if case == 2 else 1.0) * T**0.85))


def case_k(T: int) -> int:
    """``floor(2 sqrt(ln T))``."""
    return max(1, int(math.floor(2.0 * math.sqrt(math.log(T)))))


def default_q(p: int, T: int) -> float:
    """Edge probability ``1 / (p T^0.8)``."""
    return 1.0 / (p * T**0.8)


@dataclass(frozen=True)
class DgpSpec:
    """Parameters of one synthetic design.

    ``p_rule``/``k_rule``/``q_rule`` default to the case-1 rules unless
    ``case=2``; explicit ``p``/``K`` override the rules.  ``mean_scale`` sets
    the planted means ``m_j ~ mean_scale * U(0, 1)``; MWC targets
    ``mwc_scale * b/a`` of the planted model and MRC targets ``sigma_target``.
    ``loadings="gaussian"`` swaps the Toeplitz-Cholesky loadings of the
    random-graph design for i.i.d. N(0, 1) entries (pervasive factors).
    """

    kind: Literal["random_graph_factor", "elliptical_t", "pervasiveness"] = "random_graph_factor"
    T: int = 128
    case: int = 1
    p: int | None = None
    K: int | None = None
    p_rule: Callable[[int], int] | None = field(default=None, repr=False)
    k_rule: Callable[[int], int] | None = field(default=None, repr=False)
    q_rule: Callable[[int, int], float] | None = field(default=None, repr=False)
    u: float = 0.1
    v: float = 0.3
    rho: float = 0.2
    phi_f: float = 0.2
    sigma_zeta2: float = 1.0
    nu: float = math.inf
    mean_scale: float = 1.0
    mwc_scale: float = 1.1
    sigma_target: float = 1.0
    loadings: Literal["toeplitz_cholesky", "gaussian"] = "toeplitz_cholesky"

    def __post_init__(self):
        if self.T < 2:
            raise ValueError("T must be at least 2")
        if self.u <= 0:
            raise ValueError("u must be positive")
        if abs(self.phi_f) >= 1:
            raise ValueError("|phi_f| must be < 1")
        if not abs(self.rho) < 1:
            raise ValueError("|rho| must be < 1")
        if not (self.nu > 2):
            raise ValueError("nu must exceed 2 (or be infinite)")
        if self.case not in (1, 2):
            raise ValueError("case must be 1 or 2")
        if self.loadings not in ("toeplitz_cholesky", "gaussian"):
            raise ValueError(f"unknown loadings scheme {self.loadings!r}")

    @property
    def n_assets(self) -> int:
        if self.p is not None:
            return int(self.p)
        rule = self.p_rule or (lambda T: case_p(T, self.case))
        return int(rule(self.T))

    @property
    def n_factors(self) -> int:
        if self.K is not None:
            return int(self.K)
        if self.kind == "pervasiveness":
            return 3
        return int((self.k_rule or case_k)(self.T))

    @property
    def q(self) -> float:
        q = (self.q_rule or default_q)(self.n_assets, self.T)
        if not 0 < q <= 1:
            raise ValueError(f"edge probability {q} outside (0, 1]")
        return q


@dataclass(frozen=True)
class GroundTruth:
    theta_eps: np.ndarray
    B: np.ndarray
    sigma_f: np.ndarray
    theta: np.ndarray
    m: np.ndarray
    mu: float
    sigma: float
    w_true: dict
    phi_true: dict
    edge_count: int = 0
    max_degree: int = 0
    extra: dict = field(default_factory=dict)


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def random_graph_precision(p: int, q: float, u: float = 0.1, v: float = 0.3, seed=None) -> np.ndarray:
    """``A v + (|tau| + 0.1 + u) I`` with ``A`` an Erdos-Renyi(q) adjacency matrix
    and ``tau`` the smallest eigenvalue of ``A v``.
    """
    if not 0 <= q <= 1:
        raise ValueError("q must lie in [0, 1]")
    if u <= 0:
        raise ValueError("u must be positive")
    rng = _rng(seed)
    upper = np.triu(rng.random((p, p)) < q, k=1)
    A = (upper | upper.T).astype(float)
    Av = A * v
    tau = float(np.linalg.eigvalsh(Av)[0]) if A.any() else 0.0
    return Av + np.eye(p) * (abs(tau) + 0.1 + u)


def toeplitz_cov(p: int, rho: float) -> np.ndarray:
    return toeplitz(rho ** np.arange(p))


def toeplitz_loadings(p: int, K: int, rho: float) -> np.ndarray:
    """First ``K`` rows of the upper Cholesky factor of Toeplitz(rho), as ``p x K``."""
    if not abs(rho) < 1:
        raise ValueError("|rho| must be < 1")
    if not 1 <= K <= p:
        raise ValueError("need 1 <= K <= p")
    U = cholesky(toeplitz_cov(p, rho), lower=False)
    return U[:K].T.copy()


def make_truth(theta_eps, B, sigma_f, m, spec: DgpSpec, extra=None) -> GroundTruth:
    """Implied ``Theta = (B Sigma_f B' + Theta_eps^{-1})^{-1}`` and population
    portfolio quantities."""
    sigma_eps = np.linalg.inv(theta_eps)
    sigma = B @ sigma_f @ B.T + sigma_eps
    sigma = (sigma + sigma.T) / 2
    theta = np.linalg.inv(sigma)
    theta = (theta + theta.T) / 2
    inp = MomentInputs(theta, m)
    ones = np.ones(m.size)
    mu = spec.mwc_scale * float(ones @ theta @ m) / float(ones @ theta @ ones)
    w_true, phi_true = {}, {}
    for f in FORMULATIONS:
        try:
            w_true[f] = weights(inp, f, mu=mu, sigma=spec.sigma_target).w
            phi_true[f] = risk_exposure(inp, f, mu=mu, sigma=spec.sigma_target)
        except (ArithmeticError, ValueError):
            # e.g. a one-asset design has no MWC frontier
            w_true[f] = np.full(m.size, np.nan)
            phi_true[f] = math.nan
    gs = graph_stats(theta_eps)
    return GroundTruth(
        theta_eps=theta_eps,
        B=B,
        sigma_f=sigma_f,
        theta=theta,
        m=m,
        mu=mu,
        sigma=spec.sigma_target,
        w_true=w_true,
        phi_true=phi_true,
        edge_count=gs.edge_count // 2,
        max_degree=gs.max_degree,
        extra=dict(extra or {}),
    )


def _ar1_factors(rng, K, T, phi, s2):
    """Stationary AR(1) paths; ``f_0`` drawn from the stationary law."""
    F = np.empty((K, T))
    F[:, 0] = rng.standard_normal(K) * math.sqrt(s2 / (1 - phi**2))
    zeta = rng.standard_normal((K, T)) * math.sqrt(s2)
    for t in range(1, T):
        F[:, t] = phi * F[:, t - 1] + zeta[:, t]
    return F


def _gaussian_from_precision(rng, theta, T):
    """Columns ~ N(0, theta^{-1}) via the Cholesky factor of theta."""
    L = np.linalg.cholesky(theta)
    Z = rng.standard_normal((theta.shape[0], T))
    return solve_triangular(L.T, Z, lower=False)


def _planted_mean(rng, p, scale):
    return scale * rng.random(p)


def simulate_factor_dgp(spec: DgpSpec, seed=None):
    """AR(1) factors and random-graph idiosyncratic precision; ``r_t = m + B f_t + e_t``."""
    rng = _rng(seed)
    T, p, K = spec.T, spec.n_assets, spec.n_factors
    theta_eps = random_graph_precision(p, spec.q, spec.u, spec.v, rng)
    if spec.loadings == "gaussian":
        B = rng.standard_normal((p, K))
    else:
        B = toeplitz_loadings(p, K, spec.rho)
    m = _planted_mean(rng, p, spec.mean_scale)
    F = _ar1_factors(rng, K, T, spec.phi_f, spec.sigma_zeta2)
    E = _gaussian_from_precision(rng, theta_eps, T)
    R = m[:, None] + B @ F + E
    sigma_f = spec.sigma_zeta2 / (1 - spec.phi_f**2) * np.eye(K)
    truth = make_truth(theta_eps, B, sigma_f, m, spec)
    return ReturnsPanel(R), truth


def simulate_elliptical_dgp(spec: DgpSpec, seed=None):
    """``(f_t, e_t)`` jointly multivariate t with covariance ``diag(I_K, Toeplitz(rho))``.

    The scale matrix is shrunk by ``(nu-2)/nu`` so the covariance, not the
    scale, equals the target.  ``nu = inf`` gives the Gaussian case.
    """
    if not spec.nu > 2:
        raise ValueError("nu must exceed 2")
    rng = _rng(seed)
    T, p, K = spec.T, spec.n_assets, spec.n_factors
    sigma_eps = toeplitz_cov(p, spec.rho)
    B = rng.standard_normal((p, K))
    m = _planted_mean(rng, p, spec.mean_scale)
    Lf = np.eye(K)
    Le = np.linalg.cholesky(sigma_eps)
    Zf = Lf @ rng.standard_normal((K, T))
    Ze = Le @ rng.standard_normal((p, T))
    if math.isinf(spec.nu):
        mix = np.ones(T)
    else:
        mix = np.sqrt((spec.nu - 2) / rng.chisquare(spec.nu, size=T))
    F = Zf * mix
    E = Ze * mix
    R = m[:, None] + B @ F + E
    theta_eps = np.linalg.inv(sigma_eps)
    theta_eps = (theta_eps + theta_eps.T) / 2
    theta_eps[np.abs(theta_eps) < 1e-12] = 0.0
    truth = make_truth(theta_eps, B, np.eye(K), m, spec)
    return ReturnsPanel(R), truth


def eigen_gap(sigma: np.ndarray, k: int = 3) -> float:
    """``lambda_k / lambda_{k+1}`` of a covariance matrix."""
    ev = np.sort(np.linalg.eigvalsh(sigma))[::-1]
    return float(ev[k - 1] / ev[k])


def simulate_pervasiveness_dgp(T: int, p: int, rho: float, seed=None, spec: DgpSpec | None = None):
    """Factor DGP with ``Sigma_eps = Toeplitz(rho)`` and three factors.

    The population ``lambda_3/lambda_4`` is reported in ``truth.extra["gap"]``.
    """
    if not 0 < rho < 1:
        raise ValueError("rho must lie in (0, 1)")
    spec = replace(spec or DgpSpec(kind="pervasiveness"), kind="pervasiveness", T=T, p=p, K=3)
    rng = _rng(seed)
    K = 3
    sigma_eps = toeplitz_cov(p, rho)
    theta_eps = np.linalg.inv(sigma_eps)
    theta_eps = (theta_eps + theta_eps.T) / 2
    theta_eps[np.abs(theta_eps) < 1e-12] = 0.0
    B = toeplitz_loadings(p, K, spec.rho)
    m = _planted_mean(rng, p, spec.mean_scale)
    F = _ar1_factors(rng, K, T, spec.phi_f, spec.sigma_zeta2)
    E = np.linalg.cholesky(sigma_eps) @ rng.standard_normal((p, T))
    R = m[:, None] + B @ F + E
    sigma_f = spec.sigma_zeta2 / (1 - spec.phi_f**2) * np.eye(K)
    gap = eigen_gap(B @ sigma_f @ B.T + sigma_eps, 3)
    truth = make_truth(theta_eps, B, sigma_f, m, spec, extra={"gap": gap, "rho_eps": rho})
    return ReturnsPanel(R), truth


def simulate(spec: DgpSpec, seed=None, rho_eps: float | None = None):
    """Dispatch on ``spec.kind``."""
    if spec.kind == "random_graph_factor":
        return simulate_factor_dgp(spec, seed)
    if spec.kind == "elliptical_t":
        return simulate_elliptical_dgp(spec, seed)
    if spec.kind == "pervasiveness":
        if rho_eps is None:
            raise ValueError("pervasiveness design needs rho_eps")
        return simulate_pervasiveness_dgp(spec.T, spec.n_assets, rho_eps, seed, spec)
    raise ValueError(f"unknown DGP kind {spec.kind!r}")
