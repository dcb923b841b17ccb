"""``fgl`` command line: estimate, weights, backtest, simulate, rates.

Settings come from a flat ``key=value`` file (``--config``) with command-line
flags taking precedence.  Everything is validated before any computation
starts.  Exit codes: 0 success, 1 computation failure, 2 usage or
configuration error.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .backtest import STRATEGIES, BacktestConfig, run_backtest
from .data_io import (
    read_config,
    read_matrix_csv,
    read_returns_csv,
    write_json,
    write_matrix_csv,
    write_table_csv,
    write_vector_csv,
)
from .errors import DataFormatError
from .experiments import (
    DEFAULT_H,
    ESTIMATORS,
    convergence_experiment,
    fit_rate_constants,
    pervasiveness_experiment,
    robustness_experiment,
    theoretical_rate_overlay,
)
from .glasso import GlassoConfig, graph_stats
from .pipeline import FglOptions, fgl_estimate, glasso_estimate, sample_inverse_estimate
from .portfolio import MomentInputs, risk_exposure, squared_sharpe, weights

EXIT_OK, EXIT_COMPUTE, EXIT_USAGE = 0, 1, 2


class UsageError(ValueError):
    pass


def _int(v):
    try:
        f = float(v)
    except ValueError:
        raise UsageError(f"expected an integer, got {v!r}") from None
    if not f.is_integer():
        raise UsageError(f"expected an integer, got {v!r}")
    return int(f)


def _float(v):
    try:
        return float(v)
    except ValueError:
        raise UsageError(f"expected a number, got {v!r}") from None


def _floats(v):
    return tuple(math.inf if s.strip().lower() in ("inf", "infinity") else _float(s) for s in str(v).split(",") if s.strip())


def _names(v):
    return tuple(s.strip() for s in str(v).split(",") if s.strip())


def _bool_or_mode(v):
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on", "elliptical"):
        return "elliptical"
    if s in ("0", "false", "no", "off", "none"):
        return "none"
    raise UsageError(f"robust must be true/false or elliptical/none, got {v!r}")


# key -> parser; every accepted config key is listed here
KEYS = {
    # glasso
    "grid_size": _int,
    "grid_floor_ratio": _float,
    "max_sweeps": _int,
    "convergence_tol": _float,
    "cd_tol": _float,
    "penalty_weighting": str,
    # factor step
    "k": str,
    "k_max": _int,
    "robust": _bool_or_mode,
    "huber_c": _float,
    "factors": str,
    # portfolio and backtest
    "formulation": lambda v: str(v).upper(),
    "strategy": str,
    "mu_target": _float,
    "sigma_target": _float,
    "tc_bps": _float,
    "train_length": _int,
    "rebalance_every": _int,
    "min_history": _int,
    "riskfree": str,
    "index_returns": str,
    "cer_windows": str,
    "precision": str,
    # simulation
    "experiment": str,
    "case": _int,
    "h_values": _floats,
    "n_mc": _int,
    "estimators": _names,
    "nu_values": _floats,
    "rho_values": _floats,
    "T": _int,
    "p": _int,
    "n_jobs": _int,
    "master_seed": _int,
    "variant": str,
}


@dataclass
class RunConfig:
    values: dict
    input: str | None
    out: Path

    def get(self, key, default=None):
        return self.values.get(key, default)


def _build_config(args) -> RunConfig:
    raw = read_config(args.config) if args.config else {}
    unknown = sorted(set(raw) - set(KEYS))
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    vals = {k: KEYS[k](v) for k, v in raw.items()}
    flags = {
        "master_seed": args.seed,
        "formulation": args.formulation.upper() if args.formulation else None,
        "strategy": args.strategy,
        "mu_target": args.mu,
        "sigma_target": args.sigma,
        "tc_bps": args.tc_bps,
        "robust": "elliptical" if args.robust else None,
        "k": args.k,
        "case": args.case,
        "n_mc": args.nmc,
    }
    vals.update({k: v for k, v in flags.items() if v is not None})
    seed = vals.get("master_seed", 0)
    if not 0 <= seed < 2**64:
        raise UsageError("master_seed must be a 64-bit unsigned integer")
    vals["master_seed"] = seed
    if "tc_bps" in vals and not 0 <= vals["tc_bps"] < 1:
        raise UsageError("tc_bps is a cost rate (0.005 = 50 bps) and must lie in [0, 1)")
    return RunConfig(vals, args.input, Path(args.out))


def _glasso_cfg(rc: RunConfig) -> GlassoConfig:
    kw = {k: rc.values[k] for k in ("grid_size", "grid_floor_ratio", "max_sweeps", "convergence_tol", "cd_tol", "penalty_weighting") if k in rc.values}
    return GlassoConfig(**kw)


def _fgl_opts(rc: RunConfig, T: int | None = None) -> FglOptions:
    k = str(rc.get("k", "auto")).strip().lower()
    kw = dict(glasso=_glasso_cfg(rc), robust=rc.get("robust", "none"), huber_c=rc.get("huber_c", 2.0), k_max=rc.get("k_max"))
    if rc.get("factors"):
        obs = read_returns_csv(rc.get("factors")).values
        return FglOptions(factor_mode="observed", observed=obs, **kw)
    if k == "auto":
        return FglOptions(factor_mode="auto", **kw)
    return FglOptions(factor_mode="fixed", k=_int(k), **kw)


def _require_input(rc: RunConfig):
    if not rc.input:
        raise UsageError("--input is required for this command")
    return read_returns_csv(rc.input)


def _precision(panel, rc: RunConfig, strategy: str):
    """Return ``(theta, summary)`` for one estimation strategy."""
    if strategy in ("FGL", "RobustFGL"):
        opts = _fgl_opts(rc)
        if strategy == "RobustFGL":
            opts = replace(opts, robust="elliptical")
        est, fit = fgl_estimate(panel, opts)
        gs = graph_stats(est.theta_eps)
        return est.theta, dict(
            method=est.method,
            k_hat=fit.k_hat,
            lam=est.lam,
            bic=est.bic,
            bic_path=[list(x) for x in est.path],
            edge_count=gs.edge_count // 2,
            max_degree=gs.max_degree,
        )
    if strategy == "GL":
        est = glasso_estimate(panel, _glasso_cfg(rc))
        gs = graph_stats(est.theta)
        return est.theta, dict(method=est.method, lam=est.lam, bic=est.bic, bic_path=[list(x) for x in est.path], edge_count=gs.edge_count // 2, max_degree=gs.max_degree)
    if strategy == "SampleInverse":
        return sample_inverse_estimate(panel).theta, dict(method="sample_inverse")
    raise UsageError(f"strategy {strategy!r} does not produce a precision matrix")


# commands: each returns a callable doing the computation, after validation


def cmd_estimate(rc: RunConfig):
    panel = _require_input(rc)
    strategy = rc.get("strategy", "RobustFGL" if rc.get("robust") == "elliptical" else "FGL")
    if strategy not in ("FGL", "RobustFGL", "GL", "SampleInverse"):
        raise UsageError(f"estimate supports FGL, RobustFGL, GL, SampleInverse; got {strategy!r}")
    _fgl_opts(rc)

    def run():
        t0 = time.perf_counter()
        theta, summary = _precision(panel, rc, strategy)
        summary.update(p=panel.p, T=panel.T, wall_time_s=time.perf_counter() - t0)
        rc.out.mkdir(parents=True, exist_ok=True)
        write_matrix_csv(rc.out / "theta.csv", theta, panel.asset_labels)
        write_json(rc.out / "estimate.json", summary)

    return run


def _targets(rc: RunConfig, formulation: str):
    mu, sigma = rc.get("mu_target"), rc.get("sigma_target")
    if formulation == "MWC" and mu is None:
        raise UsageError("MWC needs --mu")
    if formulation == "MRC" and sigma is None:
        raise UsageError("MRC needs --sigma")
    if sigma is not None and sigma < 0:
        raise UsageError("sigma must be nonnegative")
    return mu, sigma


def cmd_weights(rc: RunConfig):
    panel = _require_input(rc)
    formulation = rc.get("formulation", "GMV")
    if formulation not in ("GMV", "MWC", "MRC"):
        raise UsageError(f"unknown formulation {formulation!r}")
    mu, sigma = _targets(rc, formulation)
    strategy = rc.get("strategy", "RobustFGL" if rc.get("robust") == "elliptical" else "FGL")
    given = None
    if rc.get("precision"):
        given, labels = read_matrix_csv(rc.get("precision"))
        if given.shape != (panel.p, panel.p):
            raise UsageError("precision matrix dimensions do not match the panel")
    else:
        _fgl_opts(rc)

    def run():
        if given is not None:
            theta, summary = given, dict(method="given")
        else:
            theta, summary = _precision(panel, rc, strategy)
        inp = MomentInputs(theta, panel.mean)
        w = weights(inp, formulation, mu=mu, sigma=sigma).w
        summary.update(
            formulation=formulation,
            mu_target=mu,
            sigma_target=sigma,
            phi=risk_exposure(inp, formulation, mu=mu, sigma=sigma),
            theta_mm=squared_sharpe(inp),
            weight_sum=float(np.sum(w)),
            expected_return=float(panel.mean @ w),
        )
        rc.out.mkdir(parents=True, exist_ok=True)
        write_vector_csv(rc.out / "weights.csv", panel.asset_labels, w)
        write_json(rc.out / "weights.json", summary)

    return run


def _aligned_series(path, panel, name):
    import pandas as pd

    if not Path(path).is_file():
        raise UsageError(f"{name} file not found: {path}")
    df = pd.read_csv(path, dtype={"date": str})
    if "date" not in df.columns or df.shape[1] < 2:
        raise UsageError(f"{name} file needs columns date,value")
    mapping = dict(zip(df["date"].astype(str).str.strip(), df.iloc[:, 1].astype(float)))
    missing = [d for d in panel.period_labels if str(d) not in mapping]
    if missing:
        raise UsageError(f"{name} series missing dates, first: {missing[0]}")
    return np.array([mapping[str(d)] for d in panel.period_labels])


def _cer_windows(spec: str | None, n: int):
    if not spec:
        return None
    out = {}
    for part in spec.split(";"):
        part = part.strip()
        if not part:
            continue
        try:
            label, a, b = part.split(":")
            out[label] = slice(int(a), int(b))
        except ValueError:
            raise UsageError(f"cer_windows entries look like label:start:stop, got {part!r}") from None
        if not 0 <= int(a) < int(b) <= n:
            raise UsageError(f"CER window {part!r} outside the test period [0, {n}]")
    return out


def cmd_backtest(rc: RunConfig):
    panel = _require_input(rc)
    kw = {k: rc.values[k] for k in ("train_length", "rebalance_every", "tc_bps", "mu_target", "sigma_target", "formulation", "strategy", "min_history") if k in rc.values}
    if "strategy" in kw and kw["strategy"] not in STRATEGIES:
        raise UsageError(f"unknown strategy {kw['strategy']!r}; choose from {', '.join(STRATEGIES)}")
    cfg = BacktestConfig(fgl=_fgl_opts(rc), **kw)
    if panel.T <= cfg.train_length:
        raise UsageError(f"panel has T={panel.T} periods, need more than train_length={cfg.train_length}")
    rf = _aligned_series(rc.get("riskfree"), panel, "riskfree") if rc.get("riskfree") else None
    idx = _aligned_series(rc.get("index_returns"), panel, "index_returns") if rc.get("index_returns") else None
    if cfg.strategy == "IndexPassthrough" and idx is None:
        raise UsageError("IndexPassthrough needs index_returns in the config")
    cers = _cer_windows(rc.get("cer_windows"), panel.T - cfg.train_length)

    def run():
        rep = run_backtest(panel, rf, cfg, index_returns=idx, cer_windows=cers)
        import pandas as pd

        table = pd.DataFrame(
            {"period": [str(x) for x in rep.periods], "gross": rep.gross_returns, "net": rep.net_returns, "trade": rep.trades}
        )
        summary = dict(
            strategy=cfg.strategy,
            formulation=cfg.formulation,
            n=len(rep.gross_returns),
            mu_test=rep.mu_test,
            sigma_test=rep.sigma_test,
            sharpe=rep.sharpe,
            mu_test_tc=rep.mu_test_tc,
            sigma_test_tc=rep.sigma_test_tc,
            sharpe_tc=rep.sharpe_tc,
            turnover=rep.turnover,
            cer_windows=[dict(label=l, cer=c, risk=r) for l, c, r in rep.cer_windows],
            rebalance_periods=list(rep.rebalance_periods),
        )
        rc.out.mkdir(parents=True, exist_ok=True)
        write_table_csv(rc.out / "backtest_returns.csv", table)
        write_json(rc.out / "backtest.json", summary)

    return run


def _experiment(rc: RunConfig):
    kind = rc.get("experiment", "convergence")
    seed = rc.get("master_seed")
    n_jobs = rc.get("n_jobs", 1)
    estimators = rc.get("estimators")
    if estimators is not None:
        bad = set(estimators) - set(ESTIMATORS)
        if bad:
            raise UsageError(f"unknown estimators {sorted(bad)}; choose from {', '.join(ESTIMATORS)}")
    n_mc = rc.get("n_mc")
    if n_mc is not None and n_mc < 1:
        raise UsageError("n_mc must be positive")
    opts = _fgl_opts(rc)
    if kind == "convergence":
        case = rc.get("case", 1)
        if case not in (1, 2):
            raise UsageError("case must be 1 or 2")
        h_values = rc.get("h_values", DEFAULT_H)
        if any(h <= 1 for h in h_values):
            raise UsageError("h values must exceed 1")
        return lambda: convergence_experiment(case, h_values, n_mc or 100, estimators or ("FGL", "GL"), seed, opts, n_jobs)
    if kind == "robustness":
        nus = rc.get("nu_values", (4.2, 7.0, math.inf))
        if any(not nu > 2 for nu in nus):
            raise UsageError("nu values must exceed 2")
        return lambda: robustness_experiment(nus, rc.get("T", 256), n_mc or 50, estimators or ("FGL", "RobustFGL"), seed, opts, n_jobs)
    if kind == "pervasiveness":
        rhos = rc.get("rho_values", (0.4, 0.5, 0.6, 0.7, 0.8, 0.9))
        if any(not 0 < r < 1 for r in rhos):
            raise UsageError("rho values must lie in (0, 1)")
        return lambda: pervasiveness_experiment(rhos, rc.get("T", 300), rc.get("p", 300), n_mc or 30, estimators or ("FGL",), seed, opts, n_jobs)
    raise UsageError(f"unknown experiment {kind!r}; choose convergence, robustness or pervasiveness")


def cmd_simulate(rc: RunConfig):
    make = _experiment(rc)

    def run():
        table = make()
        rc.out.mkdir(parents=True, exist_ok=True)
        write_table_csv(rc.out / "simulate_table.csv", table)
        write_json(
            rc.out / "simulate.json",
            {k: (list(v) if isinstance(v, tuple) else v) for k, v in sorted(rc.values.items())},
        )

    return run


def cmd_rates(rc: RunConfig):
    est = rc.get("strategy", "FGL")
    if rc.input:
        import pandas as pd

        path = Path(rc.input)
        if not path.is_file():
            raise UsageError(f"missing file: {path}")
        table = pd.read_csv(path)
        need = {"case", "h", "T", "p", "K", "estimator", "metric", "value"}
        if not need <= set(table.columns):
            raise UsageError(f"{path} is not an experiment table (need columns {sorted(need)})")
        make = lambda: table  # noqa: E731
    else:
        make = _experiment(rc)

    def run():
        import pandas as pd

        table = make()
        overlays, fits = [], {}
        for variant in ("loglog", "omega"):
            ov = theoretical_rate_overlay(table, est, variant)
            overlays.append(ov)
            fits[variant] = fit_rate_constants(ov)
        rc.out.mkdir(parents=True, exist_ok=True)
        write_table_csv(rc.out / "rates_overlay.csv", pd.concat(overlays, ignore_index=True))
        write_json(rc.out / "rates_fit.json", fits)

    return run


COMMANDS = {
    "estimate": cmd_estimate,
    "weights": cmd_weights,
    "backtest": cmd_backtest,
    "simulate": cmd_simulate,
    "rates": cmd_rates,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fgl", description="Factor Graphical Lasso toolkit")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--input", help="returns CSV (date column then one column per asset)")
    ap.add_argument("--config", help="key=value configuration file")
    ap.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    ap.add_argument("--out", default="out", help="output directory")
    ap.add_argument("--formulation", type=str.lower, choices=["gmv", "mwc", "mrc"])
    ap.add_argument("--strategy")
    ap.add_argument("--mu", type=float, help="MWC return target")
    ap.add_argument("--sigma", type=float, help="MRC risk target")
    ap.add_argument("--tc-bps", dest="tc_bps", type=float, help="transaction cost rate, 0.005 = 50 bps")
    ap.add_argument("--robust", action="store_true", help="use the elliptical (rank-based) estimator")
    ap.add_argument("--k", help="number of factors: auto or an integer")
    ap.add_argument("--case", type=int, choices=[1, 2])
    ap.add_argument("--nmc", type=int, help="Monte Carlo replications")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        rc = _build_config(args)
        run = COMMANDS[args.command](rc)
    except (UsageError, DataFormatError, ValueError, TypeError) as exc:
        print(f"fgl {args.command}: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        run()
    except Exception as exc:  # noqa: BLE001 - every failure maps to exit code 1
        print(f"fgl {args.command}: computation failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
