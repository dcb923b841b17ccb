"""Factor Graphical Lasso: sparse precision matrices for factor-driven returns
and the portfolios built from them."""

from .errors import *  # noqa: F401,F403
from .factor_model import (
    FactorModelFit,
    ReturnsPanel,
    estimate_pca,
    fit_observed_factors,
    select_num_factors,
)
from .glasso import GlassoConfig, PrecisionEstimate, glasso_fit, graph_stats, select_lambda
from .pipeline import FglOptions, fgl_combine, fgl_estimate, glasso_estimate, robust_fgl_estimate
from .portfolio import MomentInputs, gmv_weights, mrc_weights, mwc_weights, risk_exposure, weights
from .backtest import BacktestConfig, BacktestReport, run_backtest
from .simulate import DgpSpec, GroundTruth, simulate

__version__ = "0.1.0"
