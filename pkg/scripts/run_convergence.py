"""Estimator errors against T = 2^h on the random-graph factor design.

    python scripts/run_convergence.py --case 2 --h 7,7.5,8 --nmc 20 --estimators FGL,GL
"""

from _common import floats, parser

from fgl.data_io import write_table_csv
from fgl.experiments import DEFAULT_H, convergence_experiment


def main():
    ap = parser(__doc__)
    ap.add_argument("--case", type=int, choices=[1, 2], default=1)
    ap.add_argument("--h", type=floats, default=DEFAULT_H)
    ap.add_argument("--estimators", default="FGL,GL,SampleInverse")
    ap.add_argument("--loadings", choices=["toeplitz_cholesky", "gaussian"], default="toeplitz_cholesky")
    a = ap.parse_args()
    table = convergence_experiment(
        a.case, a.h, a.nmc, a.estimators.split(","), a.seed, n_jobs=a.jobs, loadings=a.loadings
    )
    path = a.out / f"convergence_case{a.case}_{a.loadings}.csv"
    write_table_csv(path, table)
    view = table[table.metric == "theta_spectral"].pivot_table(index="h", columns="estimator", values="value")
    print(view.to_string())
    print(f"wrote {path}")


if __name__ == "__main__":
    main()
