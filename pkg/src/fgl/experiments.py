"""Monte Carlo harness: error tables over sample sizes and theoretical rate overlays.

Tables are long-format ``pandas.DataFrame`` objects with columns
``case, h, T, p, K, estimator, metric, value, n_mc, failures``.  Each cell
averages the successful replications (``math.fsum`` so the result does not
depend on execution order); ``failures`` counts replications where the
estimator or the metric could not be computed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable

import numpy as np
import pandas as pd

from .glasso import omega_3t
from .pipeline import FglOptions, fgl_estimate, glasso_estimate, sample_inverse_estimate
from .portfolio import MomentInputs, risk_exposure, weights
from .simulate import FORMULATIONS, DgpSpec, GroundTruth, simulate

__all__ = [
    "ESTIMATORS",
    "METRICS",
    "COLUMNS",
    "error_norms",
    "replication_seed",
    "run_estimator",
    "monte_carlo",
    "convergence_experiment",
    "robustness_experiment",
    "pervasiveness_experiment",
    "rate_curves",
    "theoretical_rate_overlay",
    "fit_rate_constants",
]

ESTIMATORS = ("FGL", "RobustFGL", "GL", "SampleInverse")
METRICS = (
    "theta_spectral",
    "theta_l1",
    "w_gmv",
    "w_mwc",
    "w_mrc",
    "phi_gmv",
    "phi_mwc",
    "phi_mrc",
)
COLUMNS = ["case", "h", "T", "p", "K", "estimator", "metric", "value", "n_mc", "failures"]
DEFAULT_H = (7.0, 7.5, 8.0, 8.5, 9.0, 9.5)


def error_norms(theta_hat: np.ndarray, truth: GroundTruth, m_hat: np.ndarray | None = None, mu=None, sigma=None) -> dict:
    """Spectral and l1 operator-norm errors of ``theta_hat`` plus portfolio
    weight (vector l1) and exposure (``|phi_hat/phi - 1|``) errors.

    ``m_hat`` defaults to the planted mean, isolating the precision error.
    Metrics that cannot be computed (degenerate frontier and the like) are NaN.
    """
    theta_hat = np.asarray(theta_hat, dtype=float)
    if theta_hat.shape != truth.theta.shape:
        raise ValueError("dimension mismatch")
    E = theta_hat - truth.theta
    out = {
        "theta_spectral": float(np.linalg.norm(E, 2)),
        "theta_l1": float(np.abs(E).sum(axis=0).max()),
    }
    mu = truth.mu if mu is None else mu
    sigma = truth.sigma if sigma is None else sigma
    inp = MomentInputs(theta_hat, truth.m if m_hat is None else m_hat)
    for f in FORMULATIONS:
        key = f.lower()
        try:
            w = weights(inp, f, mu=mu, sigma=sigma).w
            out[f"w_{key}"] = float(np.abs(w - truth.w_true[f]).sum())
        except (ArithmeticError, ValueError, np.linalg.LinAlgError):
            out[f"w_{key}"] = math.nan
        try:
            phi = risk_exposure(inp, f, mu=mu, sigma=sigma)
            out[f"phi_{key}"] = float(abs(phi / truth.phi_true[f] - 1.0))
        except (ArithmeticError, ValueError, np.linalg.LinAlgError):
            out[f"phi_{key}"] = math.nan
    return out


def replication_seed(master_seed: int, *key: int) -> np.random.SeedSequence:
    """Seed for one replication, a pure function of ``(master_seed, key)``."""
    return np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in key))


def run_estimator(name: str, panel, opts: FglOptions = FglOptions()) -> np.ndarray:
    """Precision estimate of one of :data:`ESTIMATORS`."""
    if name == "FGL":
        return fgl_estimate(panel, replace(opts, robust="none"))[0].theta
    if name == "RobustFGL":
        return fgl_estimate(panel, replace(opts, robust="elliptical"))[0].theta
    if name == "GL":
        return glasso_estimate(panel, opts.glasso).theta
    if name == "SampleInverse":
        return sample_inverse_estimate(panel).theta
    raise ValueError(f"unknown estimator {name!r}")


@dataclass(frozen=True)
class _Cell:
    key: tuple
    spec: DgpSpec
    rho_eps: float | None = None


def _replicate(cell: _Cell, rep: int, estimators, opts, master_seed, cell_index, use_sample_mean):
    seed = replication_seed(master_seed, cell_index, rep)
    panel, truth = simulate(cell.spec, seed=seed, rho_eps=cell.rho_eps)
    res = {"s_T": float(max(truth.edge_count, 1)), "d_T": float(max(truth.max_degree, 1))}
    for name in estimators:
        try:
            theta_hat = run_estimator(name, panel, opts)
            errs = error_norms(theta_hat, truth, m_hat=panel.mean if use_sample_mean else None)
        except Exception:  # noqa: BLE001 - a failed cell is recorded, not raised
            errs = {m: math.nan for m in METRICS}
        res[name] = errs
    return res


def _mean(values):
    ok = [v for v in values if not math.isnan(v)]
    return (math.fsum(ok) / len(ok) if ok else math.nan), len(values) - len(ok)


def monte_carlo(
    cells: list[_Cell],
    estimators: Iterable[str],
    n_mc: int,
    master_seed: int = 0,
    opts: FglOptions = FglOptions(),
    n_jobs: int = 1,
    use_sample_mean: bool = False,
    extra_rows: bool = True,
) -> pd.DataFrame:
    """Run ``n_mc`` replications per cell and aggregate into the long table.

    Each cell's ``key`` is ``(case, h)``.  The planted ``s_T`` and ``d_T``
    (replication averages) are emitted as estimator ``"DGP"`` rows when
    ``extra_rows`` is set.
    """
    estimators = tuple(estimators)
    bad = set(estimators) - set(ESTIMATORS)
    if bad:
        raise ValueError(f"unknown estimators {sorted(bad)}")
    if n_mc < 1:
        raise ValueError("n_mc must be positive")
    jobs = [(ci, rep) for ci in range(len(cells)) for rep in range(n_mc)]
    args = (estimators, opts, master_seed)

    def one(ci, rep):
        return _replicate(cells[ci], rep, *args, ci, use_sample_mean)

    if n_jobs == 1:
        results = [one(ci, rep) for ci, rep in jobs]
    else:
        from joblib import Parallel, delayed

        results = Parallel(n_jobs=n_jobs)(delayed(one)(ci, rep) for ci, rep in jobs)
    by_cell = {ci: [] for ci in range(len(cells))}
    for (ci, _), r in zip(jobs, results):
        by_cell[ci].append(r)

    rows = []
    for ci, cell in enumerate(cells):
        case, h = cell.key
        spec = cell.spec
        base = dict(case=case, h=h, T=spec.T, p=spec.n_assets, K=spec.n_factors)
        reps = by_cell[ci]
        for name in estimators:
            for metric in METRICS:
                value, fails = _mean([r[name][metric] for r in reps])
                rows.append({**base, "estimator": name, "metric": metric, "value": value, "n_mc": n_mc, "failures": fails})
        if extra_rows:
            for metric in ("s_T", "d_T"):
                value, fails = _mean([r[metric] for r in reps])
                rows.append({**base, "estimator": "DGP", "metric": metric, "value": value, "n_mc": n_mc, "failures": fails})
    return pd.DataFrame(rows, columns=COLUMNS)


def _case_spec(case: int, h: float, **kw) -> DgpSpec:
    return DgpSpec(kind="random_graph_factor", T=int(math.floor(2.0**h)), case=case, **kw)


def convergence_experiment(
    case: int = 1,
    h_values: Iterable[float] = DEFAULT_H,
    n_mc: int = 100,
    estimators: Iterable[str] = ("FGL",),
    master_seed: int = 0,
    opts: FglOptions = FglOptions(),
    n_jobs: int = 1,
    **spec_kw,
) -> pd.DataFrame:
    """Errors of each estimator on the random-graph factor design at
    ``T = floor(2^h)``; ``case`` picks ``p = T^0.85`` (1) or ``3 T^0.85`` (2)."""
    if case not in (1, 2):
        raise ValueError("case must be 1 or 2")
    cells = [_Cell((f"case{case}", float(h)), _case_spec(case, h, **spec_kw)) for h in h_values]
    return monte_carlo(cells, estimators, n_mc, master_seed, opts, n_jobs)


def robustness_experiment(
    nu_values: Iterable[float] = (4.2, 7.0, math.inf),
    T: int = 256,
    n_mc: int = 50,
    estimators: Iterable[str] = ("FGL", "RobustFGL"),
    master_seed: int = 0,
    opts: FglOptions = FglOptions(),
    n_jobs: int = 1,
    **spec_kw,
) -> pd.DataFrame:
    """Elliptical t design; the ``case`` column reads ``nu=<value>``."""
    spec_kw.setdefault("rho", 0.5)
    h = math.log2(T)
    cells = [_Cell((f"nu={nu:g}", h), DgpSpec(kind="elliptical_t", T=T, nu=nu, **spec_kw)) for nu in nu_values]
    return monte_carlo(cells, estimators, n_mc, master_seed, opts, n_jobs)


def pervasiveness_experiment(
    rho_values: Iterable[float] = (0.4, 0.5, 0.6, 0.7, 0.8, 0.9),
    T: int = 300,
    p: int = 300,
    n_mc: int = 30,
    estimators: Iterable[str] = ("FGL",),
    master_seed: int = 0,
    opts: FglOptions = FglOptions(),
    n_jobs: int = 1,
) -> pd.DataFrame:
    """Toeplitz(rho) idiosyncratic design with three factors; ``case`` reads ``rho=<value>``."""
    h = math.log2(T)
    spec = DgpSpec(kind="pervasiveness", T=T, p=p, K=3)
    cells = [_Cell((f"rho={r:g}", h), spec, rho_eps=float(r)) for r in rho_values]
    return monte_carlo(cells, estimators, n_mc, master_seed, opts, n_jobs)


# rate overlays

# metric -> (curve name, slope-constant group)
RATE_MAP = {
    "theta_spectral": ("f", "C2"),
    "theta_l1": ("g", "C2"),
    "w_gmv": ("h1", "C2"),
    "w_mwc": ("h1", "C2"),
    "w_mrc": ("h2", "C6"),
    "phi_gmv": ("h3", "C2"),
    "phi_mwc": ("h3", "C2"),
    "phi_mrc": ("h4", "C9"),
}


def varrho(K: int, p: int, T: int, variant: str = "loglog") -> float:
    """``omega_3T * ln ln T`` (``"loglog"``) or plain ``omega_3T`` (``"omega"``)."""
    w = omega_3t(K, p, T)
    if variant == "omega":
        return w
    if variant == "loglog":
        return w * math.log(math.log(T))
    raise ValueError(f"unknown variant {variant!r}")


def rate_curves(K: int, p: int, T: int, s: float, d: float, variant: str = "loglog") -> dict:
    """log2 of the theoretical rate expressions (constants omitted)."""
    r = varrho(K, p, T, variant)
    expr = {
        "f": s * r,
        "g": d * K**1.5 * s * r,
        "h1": r * d**2 * K**3 * s,
        "h2": math.sqrt(r * s) * d**1.5 * K**3,
        "h3": d * K**1.5 * s * r,
        "h4": math.sqrt(r * s) * d**1.5 * K**3,
    }
    return {k: math.log2(v) for k, v in expr.items()}


def theoretical_rate_overlay(table: pd.DataFrame, estimator: str = "FGL", variant: str = "loglog") -> pd.DataFrame:
    """Theoretical log2 curves evaluated at the (T, p, K, s_T, d_T) of each row
    group in ``table``, joined with the empirical log2 errors.

    Columns: ``case, h, metric, curve, variant, empirical, theory``.
    """
    rows = []
    dgp = table[table.estimator == "DGP"].pivot_table(index=["case", "h"], columns="metric", values="value")
    est = table[table.estimator == estimator]
    for (case, h), grp in est.groupby(["case", "h"], sort=True):
        T, p, K = int(grp["T"].iloc[0]), int(grp["p"].iloc[0]), int(grp["K"].iloc[0])
        s = float(dgp.loc[(case, h), "s_T"]) if (case, h) in dgp.index else 1.0
        d = float(dgp.loc[(case, h), "d_T"]) if (case, h) in dgp.index else 1.0
        curves = rate_curves(K, p, T, s, d, variant)
        for _, row in grp.iterrows():
            if row.metric not in RATE_MAP:
                continue
            curve = RATE_MAP[row.metric][0]
            val = row.value
            rows.append(
                dict(
                    case=case,
                    h=h,
                    metric=row.metric,
                    curve=curve,
                    variant=variant,
                    empirical=math.log2(val) if val > 0 else math.nan,
                    theory=curves[curve],
                )
            )
    return pd.DataFrame(rows, columns=["case", "h", "metric", "curve", "variant", "empirical", "theory"])


def fit_rate_constants(overlay: pd.DataFrame) -> dict:
    """Least-squares fits of ``empirical = c0 + C * theory``.

    Returns ``{"per_metric": {metric: (intercept, slope, mad)}, "joint": {C2, C6, C9}}``.
    ``mad`` is the mean absolute deviation of the fitted curve in log2 units.
    The joint fit shares one slope per constant group (intercepts per metric).
    """
    ov = overlay.dropna(subset=["empirical", "theory"])
    per = {}
    for metric, grp in ov.groupby("metric", sort=True):
        x, y = grp.theory.to_numpy(), grp.empirical.to_numpy()
        if x.size >= 2 and np.ptp(x) > 0:
            slope, icpt = np.polyfit(x, y, 1)
        else:
            slope, icpt = 0.0, float(np.mean(y))
        resid = y - (icpt + slope * x)
        per[metric] = (float(icpt), float(slope), float(np.mean(np.abs(resid))))

    metrics = sorted(set(ov.metric))
    groups = sorted({RATE_MAP[m][1] for m in metrics})
    joint = {}
    if metrics:
        cols = len(metrics) + len(groups)
        X, y = [], []
        for _, row in ov.iterrows():
            xr = np.zeros(cols)
            xr[metrics.index(row.metric)] = 1.0
            xr[len(metrics) + groups.index(RATE_MAP[row.metric][1])] = row.theory
            X.append(xr)
            y.append(row.empirical)
        coef = np.linalg.lstsq(np.array(X), np.array(y), rcond=None)[0]
        joint = {g: float(coef[len(metrics) + i]) for i, g in enumerate(groups)}
    return {"per_metric": per, "joint": joint}
