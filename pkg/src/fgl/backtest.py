"""Rolling-window out-of-sample evaluation with proportional transaction costs.

Timing (0-based periods): the first estimation window is ``[0, m)`` and its
weights earn the return of period ``m``.  At every period ``t >= m - 1`` the
book is either rebalanced (every ``rebalance_every`` periods starting at
``t = m - 1``) or left to drift.  The trade executed at ``t`` is
``sum_j |w_new_j - w_drift_j|`` and its cost is charged against the return of
period ``t + 1``::

    net_{t+1} = gross_{t+1} - tc (1 + gross_{t+1}) * trade_t

The very first trade is measured from the empty portfolio.  Drift uses the
gross portfolio return, so a fully invested book stays fully invested.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np

from .errors import BankruptcyError, EstimationFailure, PortfolioWipedOutError
from .factor_model import ReturnsPanel
from .glasso import GlassoConfig
from .pipeline import FglOptions, fgl_estimate, glasso_estimate, sample_inverse_estimate
from .portfolio import MomentInputs, weights as portfolio_weights

__all__ = [
    "BacktestConfig",
    "BacktestReport",
    "Metrics",
    "run_backtest",
    "drift_weights",
    "net_return",
    "summarize",
    "cumulative_excess_return",
    "STRATEGIES",
]

STRATEGIES = ("FGL", "RobustFGL", "GL", "SampleInverse", "EqualWeight", "IndexPassthrough")


@dataclass(frozen=True)
class BacktestConfig:
    train_length: int = 504
    rebalance_every: int = 21
    tc_bps: float = 0.0050
    mu_target: float = 0.000378
    sigma_target: float = 0.013
    formulation: Literal["GMV", "MWC", "MRC"] = "GMV"
    strategy: str = "FGL"
    min_history: int = 1
    fgl: FglOptions = FglOptions()

    def __post_init__(self):
        if self.train_length < 2:
            raise ValueError("train_length must be at least 2")
        if self.rebalance_every < 1:
            raise ValueError("rebalance_every must be at least 1")
        if self.tc_bps < 0:
            raise ValueError("tc_bps must be nonnegative")
        if self.formulation.upper() not in ("GMV", "MWC", "MRC"):
            raise ValueError(f"unknown formulation {self.formulation!r}")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; choose from {STRATEGIES}")
        if self.min_history < 1:
            raise ValueError("min_history must be positive")


@dataclass(frozen=True)
class Metrics:
    mu: float
    sigma: float
    sharpe: float | None  # None when sigma == 0
    mu_tc: float
    sigma_tc: float
    sharpe_tc: float | None
    turnover: float


@dataclass(frozen=True)
class BacktestReport:
    gross_returns: np.ndarray
    net_returns: np.ndarray
    trades: np.ndarray
    periods: tuple
    mu_test: float
    sigma_test: float
    sharpe: float | None
    mu_test_tc: float
    sigma_test_tc: float
    sharpe_tc: float | None
    turnover: float
    cer_windows: list = field(default_factory=list)
    rebalance_periods: tuple = ()


def drift_weights(w: np.ndarray, r_next: np.ndarray, rf_next: float, r_portfolio_next: float) -> np.ndarray:
    """``w_j (1 + r_j + rf) / (1 + r_p + rf)``."""
    denom = 1.0 + r_portfolio_next + rf_next
    if denom == 0.0:
        raise PortfolioWipedOutError("portfolio wiped out: 1 + r_p + rf = 0")
    return np.asarray(w) * (1.0 + np.asarray(r_next) + rf_next) / denom


def net_return(w_new: np.ndarray, w_drifted: np.ndarray, gross: float, tc: float) -> float:
    """``gross - tc (1 + gross) sum_j |w_new_j - w_drifted_j|``."""
    w_new, w_drifted = np.asarray(w_new), np.asarray(w_drifted)
    if w_new.shape != w_drifted.shape:
        raise ValueError("weight vectors differ in length")
    return gross - tc * (1.0 + gross) * float(np.abs(w_new - w_drifted).sum())


def _moments(x: np.ndarray):
    n = x.size
    mu = float(x.mean())
    var = float(np.sum((x - mu) ** 2) / (n - 1))
    sigma = math.sqrt(var)
    return mu, sigma, (mu / sigma if sigma > 0 else None)


def summarize(gross: np.ndarray, net: np.ndarray, trades: np.ndarray) -> Metrics:
    """Mean, standard deviation (n-1 denominator) and Sharpe ratio of both
    series, plus average turnover.  A zero standard deviation gives a Sharpe
    ratio of ``None``.
    """
    gross, net, trades = (np.asarray(a, dtype=float) for a in (gross, net, trades))
    if gross.size < 2 or net.size < 2:
        raise ValueError("need at least two returns")
    mu, sigma, sr = _moments(gross)
    mu_tc, sigma_tc, sr_tc = _moments(net)
    return Metrics(mu, sigma, sr, mu_tc, sigma_tc, sr_tc, float(np.mean(trades)))


def cumulative_excess_return(net: np.ndarray, window=None) -> float:
    """Compounded return ``prod(1 + r) - 1`` over ``window`` (slice or index array)."""
    r = np.asarray(net, dtype=float)
    if window is not None:
        r = r[window]
    if r.size == 0:
        raise ValueError("empty CER window")
    if np.any(r <= -1.0):
        raise BankruptcyError("bankruptcy in window: a return is <= -100%")
    return float(np.expm1(np.sum(np.log1p(r))))


def _estimate_weights(train: ReturnsPanel, cfg: BacktestConfig) -> np.ndarray:
    p = train.p
    if cfg.strategy == "EqualWeight":
        return np.full(p, 1.0 / p)
    if cfg.strategy == "FGL":
        theta = fgl_estimate(train, cfg.fgl)[0].theta
    elif cfg.strategy == "RobustFGL":
        opts = FglOptions(
            factor_mode=cfg.fgl.factor_mode if cfg.fgl.factor_mode != "observed" else "auto",
            k=cfg.fgl.k,
            k_max=cfg.fgl.k_max,
            glasso=cfg.fgl.glasso,
            robust="elliptical",
            huber_c=cfg.fgl.huber_c,
        )
        theta = fgl_estimate(train, opts)[0].theta
    elif cfg.strategy == "GL":
        theta = glasso_estimate(train, cfg.fgl.glasso).theta
    elif cfg.strategy == "SampleInverse":
        theta = sample_inverse_estimate(train).theta
    else:  # pragma: no cover
        raise ValueError(cfg.strategy)
    inp = MomentInputs(theta, train.mean)
    return portfolio_weights(inp, cfg.formulation, mu=cfg.mu_target, sigma=cfg.sigma_target).w


def run_backtest(
    panel: ReturnsPanel,
    riskfree: np.ndarray | None = None,
    cfg: BacktestConfig = BacktestConfig(),
    index_returns: np.ndarray | None = None,
    cer_windows: dict | None = None,
    weight_fn: Callable[[ReturnsPanel], np.ndarray] | None = None,
) -> BacktestReport:
    """Roll the estimation window over the panel and book returns and costs.

    ``weight_fn`` overrides the configured strategy (it receives the training
    sub-panel of included assets and returns their weights).  ``cer_windows``
    maps labels to slices of the test period for cumulative returns.
    """
    X = panel.values
    p, T = X.shape
    m = cfg.train_length
    if T <= m:
        raise ValueError(f"need more than train_length={m} periods, got T={T}")
    rf = np.zeros(T) if riskfree is None else np.asarray(riskfree, dtype=float).ravel()
    if rf.shape != (T,):
        raise ValueError("riskfree must have one entry per period")
    n = T - m

    if cfg.strategy == "IndexPassthrough":
        if index_returns is None:
            raise ValueError("IndexPassthrough needs index_returns")
        idx = np.asarray(index_returns, dtype=float).ravel()
        if idx.shape != (T,):
            raise ValueError("index_returns must have one entry per period")
        gross = idx[m:].copy()
        trades = np.zeros(n)
        return _report(panel, gross, gross.copy(), trades, cer_windows, (m - 1,))

    held = np.zeros(p)  # drifted book before any trade at t
    gross = np.empty(n)
    net = np.empty(n)
    trades = np.empty(n)
    rebalances = []
    for i, t in enumerate(range(m - 1, T - 1)):
        if (t - (m - 1)) % cfg.rebalance_every == 0:
            start = t - m + 1
            # assets with enough history up to and including t
            n_hist = t + 1
            included = np.arange(p) if n_hist >= cfg.min_history else np.array([], dtype=int)
            if included.size < 2:
                raise EstimationFailure(f"fewer than 2 assets pass the history filter at period {t}", t)
            train = panel.window(start, t + 1, included)
            try:
                w_sub = weight_fn(train) if weight_fn is not None else _estimate_weights(train, cfg)
            except Exception as exc:
                raise EstimationFailure(f"estimation failed for window ending at period {t}: {exc}", t) from exc
            w_sub = np.asarray(w_sub, dtype=float)
            if w_sub.shape != (included.size,) or not np.all(np.isfinite(w_sub)):
                raise EstimationFailure(f"invalid weights for window ending at period {t}", t)
            target = np.zeros(p)
            target[included] = w_sub
            rebalances.append(t)
        else:
            target = held
        trade = float(np.abs(target - held).sum())
        r_next = X[:, t + 1]
        g = float(target @ r_next)
        gross[i] = g
        net[i] = net_return(target, held, g, cfg.tc_bps)
        trades[i] = trade
        held = drift_weights(target, r_next, rf[t + 1], g)
    return _report(panel, gross, net, trades, cer_windows, tuple(rebalances))


def _report(panel, gross, net, trades, cer_windows, rebalances) -> BacktestReport:
    mets = summarize(gross, net, trades)
    cers = []
    for label, window in (cer_windows or {}).items():
        r = net[window]
        cers.append((label, cumulative_excess_return(r), float(np.std(r, ddof=1)) if r.size > 1 else 0.0))
    n = gross.size
    return BacktestReport(
        gross_returns=gross,
        net_returns=net,
        trades=trades,
        periods=tuple(panel.period_labels[-n:]),
        mu_test=mets.mu,
        sigma_test=mets.sigma,
        sharpe=mets.sharpe,
        mu_test_tc=mets.mu_tc,
        sigma_test_tc=mets.sigma_tc,
        sharpe_tc=mets.sharpe_tc,
        turnover=mets.turnover,
        cer_windows=cers,
        rebalance_periods=rebalances,
    )
