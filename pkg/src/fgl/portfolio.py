"""GMV, MWC and MRC portfolio weights and their risk exposures from a precision matrix."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import (
    DegenerateDenominatorError,
    DegenerateFrontierError,
    ZeroMeanError,
)

__all__ = [
    "MomentInputs",
    "PortfolioWeights",
    "ExposureScalars",
    "gmv_weights",
    "mean_portfolio_weights",
    "mwc_weights",
    "mrc_weights",
    "exposure_scalars",
    "risk_exposure",
    "squared_sharpe",
    "portfolio_variance",
    "weights",
]

Formulation = Literal["GMV", "MWC", "MRC"]


@dataclass(frozen=True)
class MomentInputs:
    theta: np.ndarray
    m: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        m = np.asarray(self.m, dtype=float).ravel()
        if theta.ndim != 2 or theta.shape != (m.size, m.size):
            raise ValueError("theta must be p x p with p = len(m)")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "m", m)

    @property
    def p(self) -> int:
        return self.m.size


@dataclass(frozen=True)
class PortfolioWeights:
    w: np.ndarray
    formulation: str
    mu_target: float | None = None
    sigma_target: float | None = None


@dataclass(frozen=True)
class ExposureScalars:
    a: float
    b: float
    d: float
    g: float


def exposure_scalars(inp: MomentInputs) -> ExposureScalars:
    """``a = i'Ti/p``, ``b = i'Tm/p``, ``d = m'Tm/p``, ``g = sqrt(m'Tm)/p``."""
    p = inp.p
    ones = np.ones(p)
    a = float(ones @ inp.theta @ ones) / p
    b = float(ones @ inp.theta @ inp.m) / p
    theta_mm = squared_sharpe(inp)
    return ExposureScalars(a=a, b=b, d=theta_mm / p, g=float(np.sqrt(max(theta_mm, 0.0))) / p)


def squared_sharpe(inp: MomentInputs) -> float:
    """``m' Theta m``."""
    return float(inp.m @ inp.theta @ inp.m)


def gmv_weights(inp: MomentInputs) -> PortfolioWeights:
    t_iota = inp.theta.sum(axis=1)
    denom = t_iota.sum()
    if not denom > 0:
        raise DegenerateDenominatorError("degenerate denominator: iota' Theta iota <= 0")
    return PortfolioWeights(t_iota / denom, "GMV")


def mean_portfolio_weights(inp: MomentInputs) -> np.ndarray:
    """``w_M = (iota' Theta m)^{-1} Theta m``."""
    alpha = inp.theta @ inp.m
    denom = alpha.sum()
    if abs(denom) <= 1e-300 or abs(denom) <= 1e-14 * np.abs(alpha).sum():
        raise DegenerateFrontierError("mean orthogonal to frontier: iota' Theta m = 0")
    return alpha / denom


def _frontier_check(s: ExposureScalars):
    disc = s.a * s.d - s.b**2
    if disc <= 1e-12 * max(1.0, s.a * s.d):
        raise DegenerateFrontierError(f"degenerate frontier: ad - b^2 = {disc:.3g}")
    return disc


def mwc_weights(inp: MomentInputs, mu: float) -> PortfolioWeights:
    """Two-fund separation ``(1 - a1) w_GMV + a1 w_M`` hitting the return target ``mu``."""
    s = exposure_scalars(inp)
    _frontier_check(s)
    w_gmv = gmv_weights(inp).w
    w_m = mean_portfolio_weights(inp)
    p = inp.p
    # in terms of the raw quadratic forms: i'Ti = pa, m'Ti = pb, m'Tm = pd
    ii, mi, mm = p * s.a, p * s.b, p * s.d
    a1 = (mu * mi * ii - mi**2) / (mm * ii - mi**2)
    w = (1.0 - a1) * w_gmv + a1 * w_m
    return PortfolioWeights(w, "MWC", mu_target=float(mu))


def mrc_weights(inp: MomentInputs, sigma: float) -> PortfolioWeights:
    """``(sigma / sqrt(m'Tm)) Theta m``."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    theta_mm = squared_sharpe(inp)
    if not np.any(inp.m) or theta_mm <= 0:
        raise ZeroMeanError("zero mean vector: m' Theta m = 0")
    w = sigma / np.sqrt(theta_mm) * (inp.theta @ inp.m)
    return PortfolioWeights(w, "MRC", mu_target=float(sigma * np.sqrt(theta_mm)), sigma_target=float(sigma))


def weights(inp: MomentInputs, formulation: str, mu: float | None = None, sigma: float | None = None) -> PortfolioWeights:
    formulation = formulation.upper()
    if formulation == "GMV":
        return gmv_weights(inp)
    if formulation == "MWC":
        if mu is None:
            raise ValueError("MWC needs a return target mu")
        return mwc_weights(inp, mu)
    if formulation == "MRC":
        if sigma is None:
            raise ValueError("MRC needs a risk target sigma")
        return mrc_weights(inp, sigma)
    raise ValueError(f"unknown formulation {formulation!r}")


def risk_exposure(inp: MomentInputs, formulation: str, mu: float | None = None, sigma: float | None = None) -> float:
    """Plug-in portfolio variance.

    GMV: ``1/(pa)``.  MWC: ``(a mu^2 - 2 b mu + d) / (p (ad - b^2))``.  MRC:
    ``sigma^2 (p g)``, which equals ``sigma^2 sqrt(m'Theta m)``; note the direct
    quadratic form ``w' Theta^{-1} w`` of the MRC weights is ``sigma^2``
    (see :func:`portfolio_variance`).
    """
    s = exposure_scalars(inp)
    p = inp.p
    formulation = formulation.upper()
    if formulation == "GMV":
        return 1.0 / (p * s.a)
    if formulation == "MWC":
        if mu is None:
            raise ValueError("MWC needs a return target mu")
        disc = _frontier_check(s)
        return (s.a * mu**2 - 2 * s.b * mu + s.d) / (p * disc)
    if formulation == "MRC":
        if sigma is None:
            raise ValueError("MRC needs a risk target sigma")
        return sigma**2 * (p * s.g)
    raise ValueError(f"unknown formulation {formulation!r}")


def portfolio_variance(w: np.ndarray, theta: np.ndarray) -> float:
    """``w' Theta^{-1} w`` via a linear solve."""
    w = np.asarray(w, dtype=float)
    return float(w @ np.linalg.solve(theta, w))
